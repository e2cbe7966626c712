"""Write a VCD of the first 2000 cycles of boot_lite for a waveform viewer.

    python demos/vcd_dump.py out.vcd
"""
import sys

from fidelsim.fidelity import FidelityConfig
from fidelsim.harness import workloads
from fidelsim.harness.session import run_image


def main():
    path = sys.argv[1] if len(sys.argv) > 1 else "boot_lite.vcd"
    r = run_image(workloads.image("boot_lite"), FidelityConfig(),
                  max_cycles=2000, vcd_path=path)
    print(f"wrote {path}: {r.state.cycles} cycles, "
          f"{len(r.platform.traced_signals())} signals")


if __name__ == "__main__":
    main()
