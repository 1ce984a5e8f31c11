"""Command-line entry point.

Subcommands: ``formula`` (closed-form values), ``simulate`` (Monte Carlo
BLER of the analytic codecs or a trained model), ``train`` / ``eval`` /
``probe`` / ``bench`` (neural codec workflow).

Every emitted artifact embeds the tool version and the resolved
configuration (minus scheduling details like ``--workers``), so re-running
the embedded config reproduces the artifact byte for byte.

Exit codes: 0 success, 2 usage/configuration error, 3 numeric failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from contextlib import contextmanager

from . import __version__
from .analysis import (
    linear_probe,
    power_distribution_report,
    throughput_bench,
)
from .autodiff import lr_lambda_schedule
from .codecs import get_codec
from .formulas import (
    AMPLITUDE_CONSISTENT,
    AMPLITUDE_PRINTED,
    Variant,
    compose_block_bler,
    p_gn,
    p_gn_phase1,
    p_pam_at_snr,
    p_pb,
    p_sk,
)
from .harness import StopRule, result_row, sweep_bler, write_csv, write_jsonl
from .lightcode import (
    ArchitectureConfig,
    LightCodeCodec,
    TrainConfig,
    calibrate,
    load_model,
    save_model,
    train,
)
from .model import ChannelSpec, ConfigurationError, NumericError, RateSpec


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.9g}"
    return str(x)


def parse_snr_grid(text: str) -> list[float]:
    """Either a single value or an inclusive ``start:stop:step`` grid in dB."""
    if ":" not in text:
        return [float(text)]
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigurationError(f"bad SNR grid {text!r}; want start:stop:step")
    start, stop, step = (float(p) for p in parts)
    if step <= 0 or stop < start:
        raise ConfigurationError(f"bad SNR grid {text!r}")
    n = int(round((stop - start) / step)) + 1
    grid = [start + i * step for i in range(n)]
    if grid[-1] > stop + 1e-9:
        grid.pop()
    return grid


def _parse_fb(value: str) -> float | None:
    return None if value == "noiseless" else float(value)


@contextmanager
def _open_out(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w") as fh:
            yield fh


def _emit(fh, rows, config, fmt):
    if fmt == "jsonl":
        write_jsonl(fh, rows, config, __version__)
    else:
        write_csv(fh, rows, config, __version__)


# -- formula -------------------------------------------------------------------


def cmd_formula(args) -> int:
    if args.scheme == "compose":
        if args.p is None or args.l is None:
            raise ConfigurationError("compose needs --p and --l")
        config = {"command": "formula", "scheme": "compose", "p": args.p, "l": args.l}
        with _open_out(args.out) as fh:
            fh.write(f"# fbcodes {__version__}\n")
            fh.write(f"# config: {json.dumps(config, sort_keys=True)}\n")
            fh.write("scheme,p_k,l,value\n")
            fh.write(
                f"compose,{_fmt(args.p)},{args.l},"
                f"{_fmt(compose_block_bler(args.p, args.l))}\n"
            )
        return 0

    snrs = parse_snr_grid(args.snr)
    variant = Variant(args.variant)
    amplitudes = (
        [AMPLITUDE_CONSISTENT, AMPLITUDE_PRINTED]
        if args.amplitude == "both"
        else [args.amplitude]
    )
    config = {
        "command": "formula", "scheme": args.scheme, "k": args.k, "d": args.d,
        "snr": args.snr, "variant": args.variant, "amplitude": args.amplitude,
    }
    rows = []
    for snr_db in snrs:
        s = 10.0 ** (snr_db / 10.0)
        if args.scheme == "sk":
            rows.append((snr_db, variant.value, "-", p_sk(args.k, args.d, s, variant)))
        elif args.scheme == "gn1":
            rows.append((snr_db, "-", "-", p_gn_phase1(args.k, args.d, s)))
        elif args.scheme == "gn":
            for amp in amplitudes:
                rows.append((snr_db, "-", amp, p_gn(args.k, args.d, s, amp)))
        elif args.scheme == "pb":
            for amp in amplitudes:
                rows.append(
                    (snr_db, variant.value, amp, p_pb(args.k, args.d, s, variant, amp))
                )
        elif args.scheme == "pam":
            rows.append((snr_db, "-", "-", p_pam_at_snr(args.k, s)))
        else:
            raise ConfigurationError(f"unknown scheme {args.scheme!r}")
    with _open_out(args.out) as fh:
        fh.write(f"# fbcodes {__version__}\n")
        fh.write(f"# config: {json.dumps(config, sort_keys=True)}\n")
        fh.write("scheme,K,D,snr_db,variant,amplitude,value\n")
        for snr_db, var, amp, value in rows:
            fh.write(
                f"{args.scheme},{args.k},{args.d},{_fmt(snr_db)},{var},{amp},"
                f"{_fmt(value)}\n"
            )
    return 0


# -- simulate / eval -------------------------------------------------------------


def _run_sweep(args, codec, scheme_name: str, command: str = "simulate") -> int:
    rate = RateSpec(k=args.k, d=args.d)
    snrs = parse_snr_grid(args.snr)
    fb = _parse_fb(args.snr_fb)
    stop = StopRule(max_trials=args.max_trials, target_errors=args.target_errors)
    results = sweep_bler(
        codec, rate, snrs, stop, args.seed, workers=args.workers, snr_fb_db=fb
    )
    config = {
        "command": command, "scheme": scheme_name, "k": args.k, "d": args.d,
        "snr": args.snr, "snr_fb": args.snr_fb,
        "max_trials": args.max_trials, "target_errors": args.target_errors,
        "seed": args.seed,
    }
    if getattr(args, "model", None):
        config["model"] = args.model
    rows = []
    for snr_db, est in results:
        channel = ChannelSpec(snr_ff_db=snr_db, snr_fb_db=fb)
        rows.append(result_row(scheme_name, rate, channel, est))
        if not est.resolved:
            print(
                f"warning: unresolved estimate at {snr_db} dB "
                f"({est.errors} errors in {est.trials} trials)",
                file=sys.stderr,
            )
    with _open_out(args.out) as fh:
        _emit(fh, rows, config, args.format)
    return 0


def cmd_simulate(args) -> int:
    if args.scheme == "lightcode":
        if not args.model:
            raise ConfigurationError("scheme lightcode needs --model")
        model = load_model(args.model)
        if (args.k, args.d) != (model.arch.k, model.arch.d):
            raise ConfigurationError(
                f"--k/--d {args.k}/{args.d} do not match the checkpoint "
                f"({model.arch.k}/{model.arch.d})"
            )
        codec = LightCodeCodec(model)
    else:
        codec = get_codec(args.scheme)
    return _run_sweep(args, codec, args.scheme)


def cmd_eval(args) -> int:
    model = load_model(args.model)
    args.k, args.d = model.arch.k, model.arch.d
    return _run_sweep(args, LightCodeCodec(model), "lightcode", command="eval")


# -- train -----------------------------------------------------------------------


def cmd_train(args) -> int:
    fb = _parse_fb(args.snr_fb)
    mode = "noiseless" if fb is None else "noisy"
    if args.fb_mode:
        mode = args.fb_mode
    arch = ArchitectureConfig(
        k=args.k, d=args.d, hidden_dim=args.hidden_dim,
        feature_dim=args.feature_dim, dec_hidden=args.dec_hidden,
        feedback_mode=mode,
    )
    overrides = dict(
        lr0=args.lr, grad_clip=args.grad_clip,
        train_snr_ff_db=args.snr_ff, train_snr_fb_db=fb, seed=args.seed,
    )
    if args.batch_size:
        overrides["batch_size"] = args.batch_size
    if args.epochs:
        overrides["epochs"] = args.epochs
    if args.batches_per_epoch:
        overrides["batches_per_epoch"] = args.batches_per_epoch
    preset = (
        TrainConfig.paper_preset if args.preset == "paper"
        else TrainConfig.desk_preset
    )
    cfg = preset(**overrides)
    channel = ChannelSpec(snr_ff_db=args.snr_ff, snr_fb_db=fb)

    model = train(arch, cfg, channel)
    calibrate(model, channel, n_samples=args.calib_samples, seed=args.seed)
    save_model(model, args.out)

    config = {
        "command": "train", "preset": args.preset,
        "arch": {
            "k": arch.k, "d": arch.d, "hidden_dim": arch.hidden_dim,
            "feature_dim": arch.feature_dim, "dec_hidden": arch.dec_hidden,
            "feedback_mode": arch.feedback_mode,
        },
        "batch_size": cfg.batch_size, "epochs": cfg.epochs,
        "batches_per_epoch": cfg.batches_per_epoch, "lr0": cfg.lr0,
        "grad_clip": cfg.grad_clip, "snr_ff": args.snr_ff,
        "snr_fb": args.snr_fb, "calib_samples": args.calib_samples,
        "seed": args.seed,
    }
    loss_path = args.loss_out or (args.out + ".loss.csv")
    with open(loss_path, "w") as fh:
        fh.write(f"# fbcodes {__version__}\n")
        fh.write(f"# config: {json.dumps(config, sort_keys=True)}\n")
        fh.write("batch,epoch,lr,loss\n")
        for i, loss in enumerate(model.loss_curve):
            epoch = i // cfg.batches_per_epoch
            lr = 0.0 if cfg.lr0 == 0 else lr_lambda_schedule(epoch, cfg.epochs, cfg.lr0)
            fh.write(f"{i},{epoch},{_fmt(lr)},{_fmt(loss)}\n")
    print(f"wrote {args.out} and {loss_path}", file=sys.stderr)
    return 0


# -- probe / bench -----------------------------------------------------------------


def cmd_probe(args) -> int:
    model = load_model(args.model)
    channel = ChannelSpec(snr_ff_db=args.snr_ff, snr_fb_db=_parse_fb(args.snr_fb))
    config = {
        "command": "probe", "kind": args.kind, "round": args.round,
        "samples": args.samples, "snr_ff": args.snr_ff, "snr_fb": args.snr_fb,
        "seed": args.seed, "model": args.model,
    }
    with _open_out(args.out) as fh:
        fh.write(f"# fbcodes {__version__}\n")
        fh.write(f"# config: {json.dumps(config, sort_keys=True)}\n")
        if args.kind == "linear":
            res = linear_probe(model, args.round, args.samples, channel, args.seed)
            if res.low_sample_warning:
                print("warning: low sample count for probe", file=sys.stderr)
            fh.write("round,symbol,n_samples,r_squared,intercept,coef_x,coef_n\n")
            for fit in res.fits:
                cx = " ".join(_fmt(float(v)) for v in fit.coef_x)
                cn = " ".join(_fmt(float(v)) for v in fit.coef_n)
                fh.write(
                    f"{res.round_index},{fit.symbol_index},{fit.n_samples},"
                    f"{_fmt(fit.r_squared)},{_fmt(fit.intercept)},{cx},{cn}\n"
                )
        else:
            rep = power_distribution_report(
                model, args.round, args.samples, channel, args.seed,
                emit_rows=args.rows,
            )
            fh.write(f"# mean_abs_x_erroneous: {_fmt(rep.mean_abs_x_erroneous)}\n")
            fh.write(f"# mean_abs_x_correct: {_fmt(rep.mean_abs_x_correct)}\n")
            fh.write("sample,index_error,abs_x\n")
            for sample, err, x in rep.rows:
                fh.write(f"{sample},{err},{_fmt(x)}\n")
    return 0


def cmd_bench(args) -> int:
    rate = RateSpec(k=args.k, d=args.d)
    channel = ChannelSpec(snr_ff_db=args.snr_ff, snr_fb_db=_parse_fb(args.snr_fb))
    if args.model:
        target = load_model(args.model)
        name = "lightcode"
        rate = RateSpec(k=target.arch.k, d=target.arch.d)
    else:
        target = get_codec(args.scheme)
        name = args.scheme
    report = throughput_bench(
        target, rate, channel, batch=args.batch,
        duration_s=args.duration, repeats=args.repeats, seed=args.seed,
    )
    payload = {
        "tool": f"fbcodes {__version__}",
        "config": {
            "command": "bench", "scheme": name, "k": rate.k, "d": rate.d,
            "snr_ff": args.snr_ff, "batch": args.batch,
            "duration": args.duration, "repeats": args.repeats,
            "seed": args.seed,
        },
        "t_e": report.t_e, "t_d": report.t_d,
        "t_ek": report.t_ek, "t_dk": report.t_dk,
        "batch": report.batch, "hardware": report.hardware,
    }
    with _open_out(args.out) as fh:
        fh.write(json.dumps(payload, sort_keys=True) + "\n")
    return 0


# -- parser ------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fbcodes",
        description="feedback-channel coding workbench",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model_flag=False):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="output path (default stdout)")
        if model_flag:
            p.add_argument("--model", default=None)

    f = sub.add_parser("formula", help="closed-form error probabilities")
    f.add_argument("--scheme", required=True,
                   choices=["sk", "gn", "gn1", "pb", "pam", "compose"])
    f.add_argument("--k", type=int, default=3)
    f.add_argument("--d", type=int, default=9)
    f.add_argument("--snr", default="-1.0")
    f.add_argument("--variant", choices=["lmmse", "mvue"], default="lmmse")
    f.add_argument("--amplitude",
                   choices=[AMPLITUDE_CONSISTENT, AMPLITUDE_PRINTED, "both"],
                   default="both")
    f.add_argument("--p", type=float, default=None, help="sub-block BLER (compose)")
    f.add_argument("--l", type=int, default=None, help="number of sub-blocks")
    common(f)
    f.set_defaults(func=cmd_formula)

    s = sub.add_parser("simulate", help="Monte Carlo BLER sweep")
    s.add_argument("--scheme", required=True,
                   choices=["sk", "gn", "pb", "uncoded", "lightcode"])
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--d", type=int, default=9)
    s.add_argument("--snr", required=True, help="dB value or start:stop:step")
    s.add_argument("--snr-fb", default="noiseless")
    s.add_argument("--max-trials", type=int, default=1_000_000, dest="max_trials")
    s.add_argument("--target-errors", type=int, default=100, dest="target_errors")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    common(s, model_flag=True)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="train the neural codec")
    t.add_argument("--preset", choices=["desk", "paper"], default="desk")
    t.add_argument("--k", type=int, default=3)
    t.add_argument("--d", type=int, default=9)
    t.add_argument("--snr-ff", type=float, default=-1.0, dest="snr_ff")
    t.add_argument("--snr-fb", default="noiseless", dest="snr_fb")
    t.add_argument("--fb", dest="fb_mode", choices=["noiseless", "noisy"],
                   default=None, help="override the feedback feature mode")
    t.add_argument("--hidden-dim", type=int, default=32, dest="hidden_dim")
    t.add_argument("--feature-dim", type=int, default=16, dest="feature_dim")
    t.add_argument("--dec-hidden", type=int, default=32, dest="dec_hidden")
    t.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--batches-per-epoch", type=int, default=None,
                   dest="batches_per_epoch")
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--grad-clip", type=float, default=0.5, dest="grad_clip")
    t.add_argument("--calib-samples", type=int, default=1_000_000,
                   dest="calib_samples")
    t.add_argument("--loss-out", default=None, dest="loss_out")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True, help="checkpoint path (.lcfk)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="BLER of a trained checkpoint")
    e.add_argument("--model", required=True)
    e.add_argument("--snr", required=True)
    e.add_argument("--snr-fb", default="noiseless")
    e.add_argument("--max-trials", type=int, default=1_000_000, dest="max_trials")
    e.add_argument("--target-errors", type=int, default=100, dest="target_errors")
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    common(e)
    e.set_defaults(func=cmd_eval)

    p = sub.add_parser("probe", help="interpretation probes on a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--kind", choices=["linear", "power"], default="linear")
    p.add_argument("--round", type=int, required=True)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--rows", type=int, default=50)
    p.add_argument("--snr-ff", type=float, default=-1.0, dest="snr_ff")
    p.add_argument("--snr-fb", default="noiseless")
    common(p)
    p.set_defaults(func=cmd_probe)

    b = sub.add_parser("bench", help="encode/decode throughput")
    b.add_argument("--scheme", choices=["sk", "gn", "pb", "uncoded"], default="pb")
    b.add_argument("--k", type=int, default=3)
    b.add_argument("--d", type=int, default=9)
    b.add_argument("--snr-ff", type=float, default=-1.0, dest="snr_ff")
    b.add_argument("--snr-fb", default="noiseless")
    b.add_argument("--batch", type=int, default=10_000)
    b.add_argument("--duration", type=float, default=1.0)
    b.add_argument("--repeats", type=int, default=3)
    common(b, model_flag=True)
    b.set_defaults(func=cmd_bench)

    return parser, sub


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    config_overrides = {}
    if "--config" in argv:
        i = argv.index("--config")
        try:
            with open(argv[i + 1]) as fh:
                config_overrides = json.load(fh)
        except (IndexError, OSError, json.JSONDecodeError) as exc:
            print(f"fbcodes: bad --config: {exc}", file=sys.stderr)
            return 2
        del argv[i:i + 2]
    parser, sub = build_parser()
    if config_overrides:
        for sp in sub.choices.values():
            valid = {a.dest for a in sp._actions}
            sp.set_defaults(
                **{k: v for k, v in config_overrides.items() if k in valid}
            )
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigurationError as exc:
        print(f"fbcodes: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"fbcodes: numeric failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"fbcodes: I/O error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
