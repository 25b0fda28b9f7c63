"""Command-line entry point ``iva-lqpqm``.

Exit codes: 0 success, 1 usage or I/O error, 2 numerical failure.
"""

import argparse
import json
import os
import platform
import sys
from typing import List, Optional

import numpy as np

DEFAULT_SEED = 20200601
SEED_ENV = "IVA_LQPQM_SEED"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _default_seed() -> int:
    env = os.environ.get(SEED_ENV)
    if env is None:
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _csv_list(text: str) -> List[str]:
    return [s.strip().lower() for s in text.split(",") if s.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help=f"master seed (default {DEFAULT_SEED}, or ${SEED_ENV})")
    common.add_argument("--threads", type=int, default=1, help="worker threads; never changes results")
    common.add_argument("--out", default=".", help="output directory (default: current directory)")

    p = _Parser(prog="iva-lqpqm", description="AuxIVA with iterative projection with adjustment (IPA).")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("lqpqm", parents=[common], help="solve one LQPQM instance")
    g = q.add_mutually_exclusive_group(required=True)
    g.add_argument("--demo", action="store_true", help="solve the one-dimensional worked example")
    g.add_argument("--problem", help="JSON file with A, b, C, d, z (complex entries as strings like '1+2j')")

    for name, help_ in (("sedjoco-bench", "random SeDJoCo campaign"), ("synth-bench", "synthetic mixture campaign")):
        b = sub.add_parser(name, parents=[common], help=help_)
        b.add_argument("--config", help="key = value file (keys: M, F, N, trials, iterations, rules, seed, out_path)")
        b.add_argument("--M", type=int)
        b.add_argument("--F", type=int)
        b.add_argument("--N", type=int)
        b.add_argument("--trials", type=int)
        b.add_argument("--iterations", "--iters", dest="iterations", type=int)
        b.add_argument("--rules", type=_csv_list, help="comma-separated subset of ip,ip2,iss,ipa,sedjoco")

    s = sub.add_parser("separate", parents=[common], help="separate a multichannel WAV file")
    s.add_argument("--in", dest="in_wav", required=True)
    s.add_argument("--rule", default="ipa", choices=["ip", "ip2", "iss", "ipa", "sedjoco"])
    s.add_argument("--iters", type=int, default=100)
    s.add_argument("--frame-size", type=int, default=4096)
    s.add_argument("--hop", type=int, default=1024)
    s.add_argument("--ref-mic", type=int, default=0)
    s.add_argument("--refs", nargs="+", help="reference source WAVs for SI-SDR/SI-SIR")
    s.add_argument("--noise-snr", type=float, help="add white noise at this SNR (dB) on the reference mic")
    s.add_argument("--contrast", default="laplace")

    m = sub.add_parser("metrics", parents=[common], help="SI-SDR/SI-SIR of estimates against references")
    m.add_argument("--refs", nargs="+", required=True)
    m.add_argument("--ests", nargs="+", required=True)
    m.add_argument("--mix", help="mixture WAV for improvement values (first channel is used)")
    return p


def _versions():
    from . import __version__
    from ._backend import BACKEND
    import scipy

    return {
        "iva_lqpqm": __version__,
        "backend": BACKEND,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _write(path: str, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _write_json(path: str, obj) -> None:
    _write(path, json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, complex):
        return [v.real, v.imag]
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _parse_complex(obj):
    if isinstance(obj, list):
        return [_parse_complex(o) for o in obj]
    if isinstance(obj, str):
        return complex(obj.replace(" ", ""))
    return obj


def _cmd_lqpqm(args, out):
    from . import lqpqm

    if args.demo:
        p = lqpqm.LqpqmProblem(A=np.eye(1), b=np.zeros(1), C=np.eye(1), d=-np.ones(1), z=0.0)
    else:
        with open(args.problem) as fh:
            raw = json.load(fh)
        try:
            p = lqpqm.LqpqmProblem(**{k: np.asarray(_parse_complex(raw[k])) for k in ("A", "b", "C", "d")}, z=float(raw["z"]))
        except KeyError as exc:
            raise UsageError(f"{args.problem}: missing key {exc}") from None
    sol = lqpqm.solve(p)
    result = {
        "lambda_star": sol.lambda_star,
        "q_star": [[c.real, c.imag] for c in np.asarray(sol.q_star, dtype=complex)],
        "objective": sol.objective_value,
        "newton_iterations": sol.newton_iterations,
    }
    print(f"lambda* = {sol.lambda_star:.10f}")
    print("q* = " + ", ".join(f"{c.real:.10f}{c.imag:+.10f}j" for c in np.asarray(sol.q_star, dtype=complex)))
    print(f"objective = {sol.objective_value:.10f}")
    _write_json(os.path.join(out, "lqpqm.json"), result)
    return result


def _campaign_config(args):
    from .synthbench import CampaignConfig

    cfg = CampaignConfig.from_file(args.config) if args.config else CampaignConfig()
    for key in ("M", "F", "N", "trials", "iterations", "rules"):
        val = getattr(args, key)
        if val is not None:
            setattr(cfg, key, val)
    if args.seed is not None or not args.config:
        cfg.seed = _default_seed() if args.seed is None else args.seed
    args.seed = cfg.seed
    cfg.threads = args.threads
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg


def _cmd_bench(args, out, synthetic: bool):
    from . import synthbench

    cfg = _campaign_config(args)
    name = "synth_bench.csv" if synthetic else "sedjoco_bench.csv"
    cfg.out_path = cfg.out_path or os.path.join(out, name)
    text = synthbench.run_synthetic_campaign(cfg) if synthetic else synthbench.run_sedjoco_campaign(cfg)
    for line in text.splitlines()[1:]:
        if line.startswith("summary,"):
            print(line)
    print(f"wrote {cfg.out_path}", file=sys.stderr)
    return {"config": {k: getattr(cfg, k) for k in ("M", "F", "N", "trials", "iterations", "rules", "seed", "out_path")}}


def _report_without_timing(report, out):
    # timing and absolute paths would make reruns differ byte-wise
    final = {k: v for k, v in report.final.items() if k != "runtime_seconds"}
    if "outputs" in final:
        final["outputs"] = [os.path.relpath(p, out) for p in final["outputs"]]
    return {"records": report.records, "final": final}


def _cmd_separate(args, out):
    from . import audio, contrast

    try:
        model = contrast.get(args.contrast)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        cfg = audio.StftConfig(frame_size=args.frame_size, hop=args.hop)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report, paths = audio.separate_file(
        args.in_wav, out, args.rule, args.iters, cfg, args.refs, args.noise_snr, args.seed, args.threads, model, args.ref_mic
    )
    stem = os.path.splitext(os.path.basename(args.in_wav))[0]
    report.to_csv(os.path.join(out, f"{stem}_report.csv"))
    _write_json(os.path.join(out, f"{stem}_report.json"), _report_without_timing(report, out))
    for p in paths:
        print(p)
    for key in ("si_sdr_db", "si_sir_db", "delta_si_sdr_db", "delta_si_sir_db"):
        if key in report.final:
            print(f"{key}: " + " ".join(f"{v:.2f}" for v in report.final[key]))
    print(f"runtime: {report.final['runtime_seconds']:.2f} s", file=sys.stderr)
    return {"outputs": paths}


def _cmd_metrics(args, out):
    from . import audio, metrics

    if len(args.refs) != len(args.ests):
        raise UsageError("--refs and --ests must list the same number of files")
    refs = [audio.read_wav(p)[1][0] for p in args.refs]
    ests = [audio.read_wav(p)[1][0] for p in args.ests]
    T = min(len(s) for s in refs + ests)
    mix = None
    if args.mix:
        mix = audio.read_wav(args.mix)[1][0]
        T = min(T, len(mix))
        mix = mix[:T]
    res = metrics.best_permutation_metrics(np.stack([r[:T] for r in refs]), np.stack([e[:T] for e in ests]), mixture=mix)
    for k, v in res.items():
        print(f"{k}: {' '.join(f'{x:.2f}' if isinstance(x, float) else str(x) for x in np.asarray(v).tolist())}")
    _write_json(os.path.join(out, "metrics.json"), res)
    return {}


def main(argv: Optional[List[str]] = None) -> int:
    from .errors import NumericalError

    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        if args.seed is None and args.command not in ("sedjoco-bench", "synth-bench"):
            args.seed = _default_seed()
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        os.makedirs(args.out, exist_ok=True)
        if args.command == "lqpqm":
            extra = _cmd_lqpqm(args, args.out)
        elif args.command in ("sedjoco-bench", "synth-bench"):
            extra = _cmd_bench(args, args.out, synthetic=args.command == "synth-bench")
        elif args.command == "separate":
            extra = _cmd_separate(args, args.out)
        else:
            extra = _cmd_metrics(args, args.out)
        manifest = {
            "command": args.command,
            "argv": argv,
            "seed": args.seed,
            "versions": _versions(),
            "result": extra,
        }
        _write_json(os.path.join(args.out, f"{args.command}_manifest.json"), manifest)
        return EXIT_OK
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
