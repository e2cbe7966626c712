"""Switch boot_lite between accurate and fast modes mid-run and show that
the architectural result does not change while the cycle count does."""
from fidelsim.fidelity import FidelityConfig
from fidelsim.harness import workloads
from fidelsim.harness.session import run_image

NATIVE = FidelityConfig(signal_mode="native")
FAST = dict(ifetch_dispatch=True, data_dispatch=True,
            peripheral_gating=True, interception=True)


def main():
    img = workloads.image("boot_lite")
    ref = run_image(img, NATIVE)
    fast = run_image(img, NATIVE, toggles=[(10_000, FAST)])
    back = run_image(img, NATIVE.replace(**FAST),
                     toggles=[(10_000, {k: False for k in FAST})])
    for name, r in (("accurate", ref), ("fast after 10k", fast),
                    ("accurate after 10k", back)):
        s = r.state
        print(f"{name:<20} cycles={s.cycles:>7} same={s.same_architecture(ref.state)}"
              f" applied={[c for c, _ in r.applied]}")
    print(bytes(ref.platform.uart.output).decode(), end="")


if __name__ == "__main__":
    main()
