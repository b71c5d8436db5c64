"""Command line front end.

Subcommands: ``replay``, ``synth``, ``score``, ``register``.  Exit codes:
0 success, 1 usage error, 2 data error (bad stream, scenario, profile or
mismatched files).
"""

import argparse
import json
import sys
from pathlib import Path

from .errors import DataError
from . import session as sess


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage problems; this tool reserves 2 for
    # data errors.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_set_overrides(pairs):
    overrides = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise DataError(f"--set expects key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        try:
            overrides[key] = json.loads(raw)
        except json.JSONDecodeError:
            overrides[key] = raw  # bare strings allowed, e.g. mode=pixels
    return overrides


def _load_config(args) -> sess.SessionConfig:
    cfg = sess.load_config(args.config) if args.config else sess.SessionConfig()
    overrides = _parse_set_overrides(getattr(args, "set", None))
    if getattr(args, "seed", None) is not None:
        overrides["rng_seed"] = args.seed
    return cfg.with_overrides(overrides) if overrides else cfg


def _cmd_replay(args) -> int:
    config = _load_config(args)
    result = sess.replay(args.frames, config, profiles_dir=args.profiles)
    if args.out:
        result.write_events(args.out)
        n_events = len(result.events) - 1
        print(f"session {result.header.session_id}: {len(result.window_stats)}"
              f" windows, {len(result.saccades)} saccades, "
              f"{len(result.feedback)} feedback events; "
              f"{n_events} records -> {args.out}")
        for state in result.states:
            print(f"  [{state.window_start:9.3f}, {state.window_end:9.3f}) "
                  f"alertness={state.alertness.value:6s} "
                  f"attention={state.attention.level.value:4s} "
                  f"emotion={state.emotion.value if state.emotion else '-'}")
    else:
        for line in result.event_lines():
            print(line)
    return 0


def _cmd_synth(args) -> int:
    config = _load_config(args)
    spec = sess.load_scenario(args.spec, threshold=config.perclos_threshold)
    if spec.config_overrides:
        config = config.with_overrides(spec.config_overrides)
        if args.seed is not None:
            config = config.with_overrides({"rng_seed": args.seed})
    result = sess.synthesize_session(spec, config, args.out)
    print(f"wrote {result.frames_path} and {result.truth_path}")
    return 0


def _cmd_score(args) -> int:
    report = sess.score(args.events, args.truth)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_register(args) -> int:
    record = sess.register_from_manifest(
        args.user, args.manifest, args.profiles, k=args.k,
        face_grid=tuple(args.face_grid), eye_grid=tuple(args.eye_grid))
    eye = "with" if record.eye_model is not None else "without"
    print(f"registered user {record.profile.user_id!r} "
          f"(k={record.profile.pca.k}, {eye} eye model) "
          f"under {args.profiles}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vigilearn",
                     description="Learner alertness/emotion monitoring engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("replay", parents=[], help="run the pipeline over a "
                       "recorded frame stream")
    p.add_argument("frames", help="frame stream file (JSON lines)")
    p.add_argument("--config", help="config file (single JSON object)")
    p.add_argument("--profiles", help="profiles directory (pixel mode)")
    p.add_argument("--out", help="write the event log here instead of stdout")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config value (repeatable)")
    p.set_defaults(func=_cmd_replay, seed=None)

    p = sub.add_parser("synth", help="generate a synthetic session")
    p.add_argument("spec", help="scenario file (JSON)")
    p.add_argument("--seed", type=int, default=None, help="RNG seed override")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("score", help="compare an event log with ground truth")
    p.add_argument("events", help="event log (JSON lines)")
    p.add_argument("truth", help="ground-truth file (JSON)")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("register", help="register a user from labelled crops")
    p.add_argument("user", help="user id")
    p.add_argument("manifest", help="labelled crop manifest (JSON lines)")
    p.add_argument("--profiles", required=True, help="profiles directory")
    p.add_argument("--k", type=int, default=32, help="retained PCA dimension")
    p.add_argument("--face-grid", type=int, nargs=2, default=(7, 7),
                   metavar=("ROWS", "COLS"))
    p.add_argument("--eye-grid", type=int, nargs=2, default=(3, 3),
                   metavar=("ROWS", "COLS"))
    p.set_defaults(func=_cmd_register)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"vigilearn: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"vigilearn: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
