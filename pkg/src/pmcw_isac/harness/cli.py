"""Command-line entry point.

Exit status: 0 success, 1 invalid input (bad flag, config or argument),
2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from ..config import ScenarioConfig
from ..errors import ConfigError, ShapeError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed {text} is not a u64")
    return value


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _user(text: str):
    if text in ("far", "near"):
        return text
    if text in ("0", "1"):
        return int(text)
    raise argparse.ArgumentTypeError("user must be far, near, 0 or 1")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pmcw-isac", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="JSON scenario config (default: desk profile)")
        p.add_argument("--seed", type=_u64, help="run seed (default: config seed)")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        return p

    p = add("gen-dataset", "write a pilot-free training set for one user")
    p.add_argument("--user", type=_user, default="far")
    p.add_argument("--count", type=int, help="records (default: n_samples)")

    p = add("train", "train the neural receiver on a dataset file")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--steps", type=int, help="override the step budget")

    p = add("eval", "BER/Goodput sweep")
    p.add_argument("--receivers", default="zf-far,sic-near")
    p.add_argument("--nf", type=_float_list, help="comma-separated noise figures in dB")
    p.add_argument("--frames", type=int, help="frames per point (default: eval_frames)")
    p.add_argument("--checkpoint-far", type=Path)
    p.add_argument("--checkpoint-near", type=Path)

    p = add("goodput", "peak rates, or Goodput for every row of a BER CSV")
    p.add_argument("--ber-csv", type=Path)

    add("sense", "range-angle and range-Doppler maps for one data frame")

    p = add("gradcheck", "finite-difference check of the full network on a toy model")
    p.add_argument("--coords", type=int, default=64)

    add("selftest", "run the built-in invariant checks")
    return parser


def _load_config(args) -> ScenarioConfig:
    return ScenarioConfig.load(args.config) if args.config else ScenarioConfig.desk()


def _resolve_user(config, user) -> int:
    if user == "far":
        return config.far_user
    if user == "near":
        return config.near_user
    return int(user)


def _cmd_gen_dataset(args, config, seed, out: Path) -> None:
    from .dataset import generate_dataset
    user = _resolve_user(config, args.user)
    count = args.count if args.count is not None else config.n_samples
    if count < 1:
        raise ConfigError("--count must be >= 1")
    role = "far" if user == config.far_user else "near"
    path = generate_dataset(config, user, count, seed, out / f"dataset_{role}.pnis")
    print(path)


def _cmd_train(args, config, seed, out: Path) -> None:
    from .training import train

    def log(row):
        print(f"epoch {row['epoch']:4d} step {row['step']:6d} loss {row['loss']:.5f} "
              f"ber {row['ber']:.5f} lr {row['lr']:.3g}", flush=True)

    res = train(config, args.dataset, seed, out_dir=out, max_steps=args.steps, log=log)
    print(f"best loss {res.best_loss:.6f} after {res.steps} steps -> {out}")


def _cmd_eval(args, config, seed, out: Path) -> None:
    from .evaluation import eval_ber_sweep
    receivers = [r.strip() for r in args.receivers.split(",") if r.strip()]
    nf = args.nf if args.nf is not None else list(config.eval_nf_db)
    frames = args.frames if args.frames is not None else config.eval_frames
    models = {}
    if args.checkpoint_far:
        models["far"] = args.checkpoint_far
    if args.checkpoint_near:
        models["near"] = args.checkpoint_near
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = eval_ber_sweep(config, receivers, nf, frames, seed, models)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    path = res.write_csv(out / "ber_sweep.csv")
    for r in res.rows:
        print(f"{r.nf_db:6g} dB {r.receiver:14s} BER {r.ber:.3e} +- {r.ber_ci:.1e} ({r.bits} bits)")
    print(path)


def _cmd_goodput(args, config, seed, out: Path) -> None:
    from .evaluation import RECEIVERS, goodput, max_rate
    free, pilot = max_rate(config, True), max_rate(config, False)
    path = out / "goodput.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["nf_db", "receiver", "user", "ber", "r_max_bps", "goodput_bps",
                    "config_digest", "seed"])
        if args.ber_csv is None:
            w.writerow(["", "pilot-free", "", "0", f"{free:.9g}", f"{free:.9g}", config.digest, seed])
            w.writerow(["", "pilot", "", "0", f"{pilot:.9g}", f"{pilot:.9g}", config.digest, seed])
        else:
            with open(args.ber_csv, newline="") as src:
                for row in csv.DictReader(src):
                    name = row["receiver"]
                    if name not in RECEIVERS:
                        raise ConfigError(f"unknown receiver {name!r} in {args.ber_csv}")
                    pf = RECEIVERS[name][1]
                    ber = float(row["ber"])
                    w.writerow([row["nf_db"], name, row["user"], row["ber"],
                                f"{max_rate(config, pf):.9g}", f"{goodput(ber, config, pf):.9g}",
                                config.digest, seed])
    print(f"R_max pilot-free {free:.6g} bit/s, pilot {pilot:.6g} bit/s, ratio {free / pilot:.6f}")
    print(path)


def _cmd_sense(args, config, seed, out: Path) -> None:
    from .sensing import sense
    res = sense(config, seed, out)
    for t in res.report["targets"]:
        print(f"target {t['index']}: range err {t['range_index_error']:+d} bins, "
              f"angle err {t['angle_index_error']:+d} steps, "
              f"Doppler {t['range_doppler_peak']['doppler_hz']:+.1f} Hz "
              f"(truth {t['truth']['doppler_hz']:+.1f} Hz)")
    print(out / "peaks.json")


def toy_gradcheck(coords: int = 64, seed: int = 0):
    """Full toy network + BCE in float64 against central differences."""
    from ..nn import grad_check
    from ..t3former import ModelConfig, forward, init_params, loss
    mcfg = ModelConfig(L=7, n_t=2, M=4, d_model=16, d_key=8, n_heads=2, n_layers_1=1, n_layers_2=1)
    params = init_params(mcfg, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed)
    z1 = rng.standard_normal((2, mcfg.seq_len_1, mcfg.in_features))
    bits = rng.integers(0, 2, size=(2, mcfg.M, mcfg.n_t, mcfg.bits_per_symbol))
    return grad_check(lambda: loss(forward(params, z1, mcfg).logits, bits), params, tolerance=1e-4,
                      n_coords=coords, seed=seed)


def layer_gradcheck(coords: int = 64, seed: int = 0):
    """One encoder layer under a random linear read-out, float64."""
    from ..nn import Tensor, encoder_layer, grad_check, init_encoder_layer
    rng = np.random.default_rng(seed)
    params = init_encoder_layer(rng, 16, 8, 2, dtype=np.float64)
    x = Tensor(rng.standard_normal((2, 6, 16)), requires_grad=True)
    readout = Tensor(rng.standard_normal((2, 6, 16)))
    params = {**params, "x": x}
    layer = {k: v for k, v in params.items() if k != "x"}
    return grad_check(lambda: (encoder_layer(x, layer, 2) * readout).sum(), params,
                      tolerance=1e-4, n_coords=coords, seed=seed)


def _cmd_gradcheck(args, config, seed, out: Path) -> None:
    report = toy_gradcheck(args.coords, seed % (2 ** 32))
    path = out / "gradcheck.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tensor", "coords", "max_rel_err", "config_digest", "seed"])
        for name, err in report.per_tensor.items():
            w.writerow([name, report.coords_checked[name], f"{err:.6e}", config.digest, seed])
    for line in report.lines():
        print(line)
    print(f"max relative error {report.max_error:.3e} ({'PASS' if report.passed else 'FAIL'})")
    if not report.passed:
        raise RuntimeError("gradient check failed")


def run_selftest(config: ScenarioConfig | None = None) -> list:
    """Fast invariant checks; returns ``(name, passed, detail)`` tuples."""
    from ..comm import detect_near_sic
    from ..waveform import gen_hadamard, gen_mseq, noma_superpose, outer_code, qpsk_mod
    from .evaluation import eval_ber_sweep, max_rate
    config = config or ScenarioConfig.desk()
    checks = []

    def check(name, fn):
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # report, keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        checks.append((name, bool(ok), f"{detail} [{time.perf_counter() - t0:.2f}s]"))

    def mseq():
        worst = 0.0
        for L in (7, 15, 31, 63):
            c = gen_mseq(L).chips.astype(float)
            r = np.array([c @ np.roll(c, k) for k in range(L)])
            worst = max(worst, abs(r[0] - L), *np.abs(r[1:] + 1))
        return worst == 0, f"max autocorrelation deviation {worst}"

    def orth():
        P = outer_code(gen_mseq(config.code_length), gen_hadamard(config.n_tx)).astype(float)
        dev = np.abs(P.T @ P - config.fast_time_len * np.eye(config.n_tx)).max()
        return dev == 0, f"max |P^T P - L N_t I| = {dev}"

    def noma():
        bits = np.array([[a, b] for a in (0, 1) for b in (0, 1)])
        s = qpsk_mod(bits)
        bad = 0
        for i in range(4):
            for j in range(4):
                far, near = detect_near_sic(noma_superpose(s[i:i + 1], s[j:j + 1], config.p1, config.p2),
                                            config.p1, config.p2)
                bad += int(not (np.array_equal(far.ravel(), bits[i]) and np.array_equal(near.ravel(), bits[j])))
        return bad == 0, f"{16 - bad}/16 pairs"

    def noiseless():
        res = eval_ber_sweep(config, ["zf-far", "sic-near"], [-math.inf], 10, 0)
        errs = sum(r.errors for r in res.rows)
        return errs == 0, f"{errs} errors over {sum(r.bits for r in res.rows)} bits"

    def ceiling():
        ratio = max_rate(config, True) / max_rate(config, False)
        want = config.n_blocks / (config.n_blocks - config.n_pilot_blocks)
        return abs(ratio - want) < 1e-12, f"ratio {ratio:.12g}"

    def grads():
        rep = layer_gradcheck(16)
        return rep.passed, f"encoder layer max relative error {rep.max_error:.2e}"

    check("m-sequence autocorrelation", mseq)
    check("outer-code orthogonality", orth)
    check("NOMA noiseless SIC", noma)
    check("noiseless closed loop", noiseless)
    check("goodput ceiling ratio", ceiling)
    check("gradient check", grads)
    return checks


def _cmd_selftest(args, config, seed, out: Path) -> None:
    results = run_selftest(config)
    with open(out / "selftest.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["check", "passed", "config_digest", "seed"])
        for name, ok, _ in results:
            w.writerow([name, int(ok), config.digest, seed])
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    if not all(ok for _, ok, _ in results):
        raise RuntimeError("selftest failed")


COMMANDS = {
    "gen-dataset": _cmd_gen_dataset, "train": _cmd_train, "eval": _cmd_eval,
    "goodput": _cmd_goodput, "sense": _cmd_sense, "gradcheck": _cmd_gradcheck,
    "selftest": _cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_INVALID
    try:
        config = _load_config(args)
        seed = args.seed if args.seed is not None else config.seed
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "config.json").write_text(json.dumps(config.to_dict(), sort_keys=True, indent=2) + "\n")
        COMMANDS[args.command](args, config, seed, args.out)
    except (ConfigError, ShapeError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
