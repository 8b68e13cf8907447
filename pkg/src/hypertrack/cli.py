"""Command line entry point: ``hypertrack <command> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 failed
verification, 3 file I/O or format error.
"""

from __future__ import annotations

import argparse
import ast
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .config import Config, ConfigError, load_config
from .estimator import HyperSSMNetwork
from .estimators import ConstantPositionPredictor, HyperSSMRegressor, KalmanPredictor
from .metrics import EvalReport, evaluate, motion_eval
from .mot_io import MotFormatError, MotRow, read_mot, write_mot
from .numeric import make_rng
from .scenarios import KINDS, generate, load_scenario, write_scenario
from .tracker import run_sequence, scenario_frames
from .training import build_windows, train, write_loss_curve

log = logging.getLogger("hypertrack")

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# helpers


def _header(command: str, cfg: Config) -> None:
    print(f"# hypertrack {command} seed={cfg.seed}")


def _load_scenarios(dirs):
    return [load_scenario(d) for d in dirs]


def _lambda2(cfg: Config, scenarios) -> float:
    kinds = {s.kind for s in scenarios}
    if cfg.lambda2 is not None:
        return cfg.lambda2
    return 0.0 if kinds == {"linear"} else 1.0


def _train_model(cfg: Config, scenarios, use_hconv: bool, **overrides) -> HyperSSMRegressor:
    est = HyperSSMRegressor(window_len=cfg.window_len, layers=cfg.layers, embed_dim=cfg.embed_dim,
                            state_dim=cfg.state_dim, theta=cfg.theta, alpha=cfg.alpha, use_hconv=use_hconv,
                            lr=cfg.lr, batch_size=cfg.batch, epochs=cfg.epochs, lambda1=cfg.lambda1,
                            lambda2=_lambda2(cfg, scenarios), random_state=cfg.seed)
    est.set_params(**overrides)
    return est.fit(scenarios)


def _kalman(cfg: Config) -> KalmanPredictor:
    return KalmanPredictor(cfg.kf_std_position, cfg.kf_std_velocity, cfg.kf_std_measurement)


def _scale(scenario) -> np.ndarray:
    w, h = scenario.image_size
    return np.array([w, h, w, h], dtype=np.float64)


def track_rows(scenario, motion, cfg: Config) -> list[MotRow]:
    results = run_sequence(scenario_frames(scenario), motion, cfg.tracker())
    s = _scale(scenario)
    return [MotRow.from_center(f, tid, box * s, 1.0)
            for f in sorted(results) for tid, box in sorted(results[f].items())]


def _frames_from_rows(frames: dict[int, list[MotRow]]) -> dict[int, dict[int, np.ndarray]]:
    return {f: {r.id: r.box for r in rows} for f, rows in frames.items()}


def _score(predictor, scenarios, cfg: Config) -> dict:
    reports = []
    ades = []
    for sc in scenarios:
        results = run_sequence(scenario_frames(sc), predictor.motion_model(), cfg.tracker())
        reports.append(evaluate(results, sc.gt, cfg.iou_match_thresh))
        ades.append(motion_eval(predictor, sc.gt, history_len=cfg.eval_history)[0])
    return {
        "mota": float(np.mean([r.mota for r in reports])),
        "idf1": float(np.mean([r.idf1 for r in reports])),
        "idsw": int(sum(r.id_switches for r in reports)),
        "ade": float(np.mean(ades)),
    }


def _table(title: str, key: str, rows: list[tuple[str, dict]]) -> str:
    cols = ["mota", "idf1", "idsw", "ade"]
    lines = [title, f"{key:<12}" + "".join(f"{c.upper():>12}" for c in cols)]
    for name, r in rows:
        cells = "".join(f"{r[c]:>12d}" if c == "idsw" else f"{r[c]:>12.6f}" for c in cols)
        lines.append(f"{name:<12}{cells}")
    return "\n".join(lines) + "\n"


def _write_csv(path: Path, key: str, rows: list[tuple[str, dict]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([key, "mota", "idf1", "idsw", "ade"])
        for name, r in rows:
            w.writerow([name, repr(r["mota"]), repr(r["idf1"]), r["idsw"], repr(r["ade"])])


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args, cfg: Config) -> int:
    params = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        try:
            params[key.strip()] = ast.literal_eval(value.strip())
        except (ValueError, SyntaxError):
            params[key.strip()] = value.strip()
    try:
        scenario = generate(args.kind, params, seed=cfg.seed)
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    out = write_scenario(scenario, args.out)
    _header("generate", cfg)
    print(f"kind={scenario.kind} frames={scenario.frames} objects={len(scenario.gt.get(1, {}))} out={out}")
    return EXIT_OK


def cmd_train(args, cfg: Config) -> int:
    scenarios = _load_scenarios(args.scenarios)
    _header("train", cfg)
    est = _train_model(cfg, scenarios, use_hconv=not args.no_hconv)
    est.save(args.out)
    curve_path = args.loss_curve or f"{args.out}.loss"
    write_loss_curve(est.loss_curve_, curve_path)
    kind = "hyperssm" if not args.no_hconv else "ssm"
    final = est.loss_curve_[-1] if est.loss_curve_ else float("nan")
    print(f"model={kind} epochs={len(est.loss_curve_)} final_loss={final:.6g} checkpoint={args.out} "
          f"loss_curve={curve_path}")
    return EXIT_OK


def cmd_track(args, cfg: Config) -> int:
    if (args.checkpoint is None) == (args.motion is None):
        raise UsageError("give exactly one of --checkpoint or --motion")
    scenario = load_scenario(args.scenario)
    if args.checkpoint is not None:
        net = HyperSSMNetwork.load(args.checkpoint)
        if net.config.window_len != cfg.window_len:
            cfg = cfg.replace(window_len=net.config.window_len)
        motion = HyperSSMRegressor.from_network(net).motion_model()
        label = "hyperssm" if net.config.use_hconv else "ssm"
    elif args.motion == "kalman":
        motion, label = _kalman(cfg).motion_model(), "kalman"
    else:
        motion, label = ConstantPositionPredictor().motion_model(), "constant"
    rows = track_rows(scenario, motion, cfg)
    write_mot(rows, args.out)
    _header("track", cfg)
    print(f"motion={label} frames={scenario.frames} rows={len(rows)} out={args.out}")
    return EXIT_OK


def cmd_eval(args, cfg: Config) -> int:
    results = _frames_from_rows(read_mot(args.results))
    gt = _frames_from_rows(read_mot(args.gt))
    report: EvalReport = evaluate(results, gt, cfg.iou_match_thresh)
    _header("eval", cfg)
    print(report.format(), end="")
    return EXIT_OK


def cmd_compare(args, cfg: Config) -> int:
    test = _load_scenarios(args.scenarios)
    train_set = _load_scenarios(args.train)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _header("compare", cfg)

    models = [("Kalman", _kalman(cfg))]
    for name, use_hconv in (("SSM", False), ("HyperSSM", True)):
        est = _train_model(cfg, train_set, use_hconv)
        write_loss_curve(est.loss_curve_, out / f"loss_{name.lower()}.txt")
        models.append((name, est))
    model_rows = [(name, _score(m, test, cfg)) for name, m in models]
    text = _table("motion models", "model", model_rows)

    sweeps = [("theta", [float(t) for t in args.thetas.split(",")], "theta"),
              ("layers", [int(k) for k in args.layer_counts.split(",")], "layers")]
    traces = {"models": model_rows}
    for title, values, param in sweeps:
        rows = []
        for v in values:
            est = _train_model(cfg, train_set, True, **{param: v})
            rows.append((repr(v), _score(est, test, cfg)))
        traces[title] = rows
        text += "\n" + _table(f"HyperSSM {title} sweep", title, rows)

    print(text, end="")
    (out / "compare.txt").write_text(f"# seed={cfg.seed}\n" + text)
    for name, rows in traces.items():
        _write_csv(out / f"{name}.csv", name if name != "models" else "model", rows)
    return EXIT_OK


def cmd_verify(args, cfg: Config) -> int:
    from .verify import run_all

    _header("verify", cfg)
    results = run_all(cfg.estimator(), seed=cfg.seed)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--seed", type=int, help="overrides the config seed (default 0)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = _Parser(prog="hypertrack", description="HyperSSM collaborative motion estimation and tracking")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", parents=[common], help="write a synthetic scenario archive")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="scenario parameter override")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", parents=[common], help="train HyperSSM (or plain SSM) on scenario archives")
    p.add_argument("scenarios", nargs="+", help="scenario directories")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--no-hconv", action="store_true", help="train the plain-SSM ablation")
    p.add_argument("--loss-curve", help="loss curve path (default: <checkpoint>.loss)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("track", parents=[common], help="run the tracker on a scenario's detections")
    p.add_argument("scenario", help="scenario directory")
    p.add_argument("--checkpoint", help="trained HyperSSM/SSM checkpoint")
    p.add_argument("--motion", choices=("kalman", "constant"), help="use a baseline motion model instead")
    p.add_argument("--out", required=True, help="MOT-format results file")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", parents=[common], help="score a results file against ground truth")
    p.add_argument("results")
    p.add_argument("gt")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", parents=[common], help="motion-model ablation with theta and layer sweeps")
    p.add_argument("scenarios", nargs="+", help="evaluation scenario directories")
    p.add_argument("--train", nargs="+", required=True, help="training scenario directories")
    p.add_argument("--out", required=True, help="directory for tables and CSV traces")
    p.add_argument("--thetas", default="0.5,0.8,0.98")
    p.add_argument("--layer-counts", default="1,2,4,8")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("verify", parents=[common], help="gradient, reduction and equivariance self-checks")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        return args.func(args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"hypertrack {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, MotFormatError, KeyError, ValueError) as exc:
        # KeyError/ValueError here come from malformed archives or checkpoints
        print(f"hypertrack {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
