"""Command line front end: ``fidelsim asm|run|bench|diff|disasm``.

Images and sources may be given as files or as ``workload:NAME`` for the
bundled workloads (``aluloop``, ``memtest``, ``uart_echo``, ``boot_lite``).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .cpu.isa import IllegalInstruction, disassemble
from .fidelity import FidelityConfig, parse_assignments
from .harness import workloads
from .harness.asm import AsmError, assemble
from .harness.bench import (BenchError, ladder_configs, ladder_table,
                            run_benchmark)
from .harness.image import Image, ImageError, format_symbols
from .harness.session import parse_toggle, run_image
from .harness.terminal import StdioStream, TerminalError, open_endpoint
from .harness.trace import PinTrace, TraceError, trace_compare
from .kernel import ConfigurationError
from .platform import LoadError

WORKLOAD_PREFIX = "workload:"


def _load_image(spec: str) -> Image:
    if spec.startswith(WORKLOAD_PREFIX):
        return workloads.image(spec[len(WORKLOAD_PREFIX):])
    path = Path(spec)
    if path.suffix in (".s", ".asm"):
        return assemble(path.read_text())
    return Image.load(path)


def _fidelity(items) -> FidelityConfig:
    flat = [a for item in items or () for a in item.split(",") if a]
    return FidelityConfig().replace(**parse_assignments(flat))


def cmd_asm(args) -> int:
    if args.source.startswith(WORKLOAD_PREFIX):
        text = workloads.source(args.source[len(WORKLOAD_PREFIX):])
    else:
        text = Path(args.source).read_text()
    if args.with_lib:
        text += f"\n        .org {workloads.LIB_BASE:#x}\n" + workloads.library_source()
    img = assemble(text)
    img.save(args.output)
    sym = args.symbols or str(Path(args.output).with_suffix(".sym"))
    Path(sym).write_text(format_symbols(img.symbols))
    size = sum(len(d) for _, d in img.segments)
    print(f"wrote {args.output}: {len(img.segments)} segment(s), {size} bytes, "
          f"entry {img.entry:#010x}, {len(img.symbols)} symbol(s)")
    return 0


def cmd_run(args) -> int:
    img = _load_image(args.image)
    cfg = _fidelity(args.fidelity)
    toggles = [parse_toggle(t) for t in args.toggle or ()]
    stream = open_endpoint(args.term)
    out = sys.stderr if isinstance(stream, StdioStream) else sys.stdout
    try:
        res = run_image(img, cfg, stream=stream, toggles=toggles,
                        max_cycles=args.max_cycles, trace_path=args.trace,
                        vcd_path=args.vcd, all_signals=args.all_signals)
    finally:
        stream.close()
    st = res.state
    p = res.platform
    stats = p.cpu.stats
    lines = [
        f"config={res.platform.construction.label}",
        f"cycles={st.cycles}",
        f"instructions={st.instructions}",
        f"cpi={stats.cpi:.4f}",
        f"intercepted_calls={stats.intercepted_calls}",
        f"halted={str(st.halted).lower()}",
        f"fault={st.fault or 'none'}",
        f"pc={st.pc:#010x}",
        f"uart_bytes={len(st.uart_out)}",
        f"ram_sha256={st.ram_digest}",
    ]
    for cycle, delta in res.applied:
        kv = ",".join(f"{k}={int(v) if isinstance(v, bool) else v}"
                      for k, v in delta.items())
        lines.append(f"applied={cycle}:{kv}")
    if not isinstance(stream, StdioStream):
        lines.append("uart=" + st.uart_out.decode("latin-1")
                     .encode("unicode_escape").decode("ascii"))
    if args.trace:
        lines.append(f"trace={args.trace} records={res.trace_records}")
    if args.vcd:
        lines.append(f"vcd={args.vcd}")
    print("\n".join(lines), file=out)
    return 1 if st.fault else 0


GRID_PRESETS = {
    "ladder": lambda: [cfg for _, cfg in ladder_configs()],
}


def _grid(specs) -> list[FidelityConfig]:
    out = []
    for spec in specs or ["signal_mode=resolved4"]:
        if spec in GRID_PRESETS:
            out += GRID_PRESETS[spec]()
            continue
        for one in spec.split(";"):
            one = one.strip()
            out.append(_fidelity([one]) if one else FidelityConfig())
    return out


def cmd_bench(args) -> int:
    img_name = args.image
    if img_name.startswith(WORKLOAD_PREFIX):
        workload = img_name[len(WORKLOAD_PREFIX):]
    else:
        workload = _load_image(img_name)
    reports = []
    base_cycles = None
    for cfg in _grid(args.grid):
        r = run_benchmark(workload, cfg, args.phases, args.reps,
                          max_cycles=args.max_cycles,
                          baseline_cycles=base_cycles)
        if base_cycles is None and not r.failed and cfg.cycle_accurate:
            base_cycles = r.cycles
            r.baseline_cycles = r.cycles
        reports.append(r)
        print(r.to_text())
        sys.stdout.flush()
    if len(reports) > 1:
        print(ladder_table(reports))
    if args.out:
        Path(args.out).write_text(json.dumps([r.to_dict() for r in reports],
                                             indent=2) + "\n")
    return 1 if any(r.failed for r in reports) else 0


def cmd_diff(args) -> int:
    a = PinTrace.load(args.trace_a)
    b = PinTrace.load(args.trace_b)
    d = trace_compare(a, b)
    if d is None:
        print("equal")
        return 0
    print(d)
    return 1


def cmd_disasm(args) -> int:
    img = _load_image(args.image)
    names = {}
    for n, a in img.symbols.items():
        names.setdefault(a, n)
    for base, data in img.segments:
        for off in range(0, len(data) - 3, 4):
            addr = base + off
            word = int.from_bytes(data[off:off + 4], "big")
            try:
                text = disassemble(word, addr)
            except IllegalInstruction:
                text = f".word {word:#010x}"
            label = f"{names[addr]}:" if addr in names else ""
            print(f"{addr:08x}  {word:08x}  {label:<12}{text}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fidelsim",
        description="switchable-fidelity cycle-accurate SoC simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("asm", help="assemble MR32 source into an image")
    p.add_argument("source", help="source file or workload:NAME")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--symbols", help="symbol file (default: <output>.sym)")
    p.add_argument("--with-lib", action="store_true",
                   help="append the bundled runtime library")
    p.set_defaults(fn=cmd_asm)

    p = sub.add_parser("run", help="simulate an image")
    p.add_argument("image", help="image file, .s source or workload:NAME")
    p.add_argument("--fidelity", action="append", metavar="KEY=VAL",
                   help="configuration axis (repeatable)")
    p.add_argument("--toggle", action="append", metavar="CYCLE:KEY=VAL",
                   help="switch a runtime axis at a cycle (repeatable)")
    p.add_argument("--term", default=None,
                   help="UART endpoint: stdio, tcp:PORT or script:FILE")
    p.add_argument("--vcd", help="write a VCD waveform of the traced pins")
    p.add_argument("--trace", help="write a pin trace")
    p.add_argument("--all-signals", action="store_true",
                   help="trace every signal, not only the bus and irq pins")
    p.add_argument("--max-cycles", type=int, default=None)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("bench", help="phase-averaged speed measurement")
    p.add_argument("image", help="image file or workload:NAME")
    p.add_argument("--grid", action="append", metavar="CONFIGS",
                   help="';'-separated configs of ','-separated KEY=VAL, "
                        "or 'ladder' (repeatable)")
    p.add_argument("--phases", type=int, default=10)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--max-cycles", type=int, default=None)
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("diff", help="compare two pin traces")
    p.add_argument("trace_a")
    p.add_argument("trace_b")
    p.set_defaults(fn=cmd_diff)

    p = sub.add_parser("disasm", help="disassemble an image")
    p.add_argument("image")
    p.set_defaults(fn=cmd_disasm)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (AsmError, ImageError, LoadError, ConfigurationError, TraceError,
            TerminalError, BenchError, OSError, KeyError, ValueError) as e:
        print(f"fidelsim: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
