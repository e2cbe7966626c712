"""Run uart_echo with a scripted terminal and print what the guest echoed.

For an interactive session use the CLI instead:
    fidelsim run workload:uart_echo --term stdio
    fidelsim run workload:uart_echo --term tcp:5555   (then: nc localhost 5555)
"""
from fidelsim.fidelity import FidelityConfig
from fidelsim.harness import workloads
from fidelsim.platform import Platform


def main():
    p = Platform(FidelityConfig(signal_mode="native", ifetch_dispatch=True),
                 stream=workloads.echo_stream(workloads.ECHO_SCRIPT))
    p.load(workloads.image("uart_echo"))
    s = p.run(max_cycles=3_000_000)
    print(f"halted={s.halted} cycles={s.cycles}")
    print(bytes(p.uart.output).decode(errors="replace"))


if __name__ == "__main__":
    main()
