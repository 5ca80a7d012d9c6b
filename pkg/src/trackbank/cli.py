"""Command line interface.

Subcommands: gen (synthetic video sets), train (per-video policy), eval
(run a policy over videos, write per-frame and per-video metrics), compare
(aligned metric table against a baseline). Exit codes: 0 success, 1
validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import zlib
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .baselines import (
    FifoPolicy,
    GreedyPolicy,
    LearnedPolicy,
    OraclePolicy,
    RandomPolicy,
    dp_oracle,
    save_oracle_policy,
)
from .bridge import connect_remote_tracker
from .env import DEFAULT_STATE_BUDGET, TrackingEnv, rollout
from .errors import ConfigurationError, InvariantError, TrackbankError
from .metrics import (
    compute_summary,
    comparison_table,
    frame_results_from_trace,
    write_frame_records,
)
from .ppo import (
    TrainConfig,
    append_history,
    load_checkpoint,
    save_checkpoint,
    save_history,
    train,
)
from .trackers import ScriptedTable, ScriptedTracker, SimParams, SyntheticTracker
from .videos import FAMILIES, VideoSpec, generate_video, load_video, save_video

BUILTIN_POLICIES = ("fifo", "random", "greedy", "oracle")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - argparse hook
        raise ConfigurationError(f"{self.format_usage().strip()}\n{self.prog}: {message}")


def _write_json(path: Path, data) -> None:
    path.write_text(
        json.dumps(data, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _video_rng(seed: int, video_id: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(video_id.encode("utf-8"))])


def collect_video_paths(inputs: list[str]) -> list[Path]:
    """Expand video files, manifest files, and directories into video paths."""
    out: list[Path] = []
    seen: set[Path] = set()

    def add(p: Path) -> None:
        r = p.resolve()
        if r not in seen:
            seen.add(r)
            out.append(p)

    for text in inputs:
        path = Path(text)
        if path.is_dir():
            manifest = path / "manifest.json"
            if manifest.is_file():
                for entry in _manifest_video_files(manifest):
                    add(entry)
            else:
                for p in sorted(path.glob("*.json")):
                    add(p)
        elif path.name == "manifest.json":
            for entry in _manifest_video_files(path):
                add(entry)
        elif path.is_file():
            add(path)
        else:
            raise ConfigurationError(f"no such video input: {text}")
    if not out:
        raise ConfigurationError("no videos found in the given inputs")
    return out


def _manifest_video_files(manifest: Path) -> list[Path]:
    try:
        data = json.loads(manifest.read_text(encoding="utf-8"))
        return [manifest.parent / v["file"] for v in data["videos"]]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed manifest {manifest}: {exc}") from exc


def _sim_params(args) -> SimParams:
    return SimParams(
        hallucination_threshold=args.hallucination_threshold,
        similarity_floor=args.similarity_floor,
    )


class TrackerSpec:
    """Parsed --tracker value: synthetic | scripted:<file> | bridge:<endpoint>."""

    def __init__(self, text: str, sim: SimParams) -> None:
        self.text = text
        self.sim = sim
        self._tables: dict[str, ScriptedTable] = {}
        if text == "synthetic":
            self.kind = "synthetic"
        elif text.startswith("scripted:"):
            self.kind = "scripted"
            self.path = text[len("scripted:"):]
            if not self.path:
                raise ConfigurationError("scripted tracker needs a file: scripted:<path>")
        elif text.startswith("bridge:"):
            self.kind = "bridge"
            self.endpoint = text[len("bridge:"):]
            if not self.endpoint:
                raise ConfigurationError("bridge tracker needs an endpoint: bridge:<endpoint>")
        else:
            raise ConfigurationError(
                f"unrecognized tracker {text!r}; expected synthetic, "
                "scripted:<file>, or bridge:<endpoint>"
            )

    def table(self) -> ScriptedTable:
        if self.path not in self._tables:
            self._tables[self.path] = ScriptedTable.load(self.path)
        return self._tables[self.path]

    def check_video(self, video: VideoSpec, capacity: int) -> str | None:
        """Reason this video cannot be served, or None."""
        if self.kind == "scripted":
            table = self.table()
            if table.video_length != video.length or table.capacity != capacity:
                return (
                    f"scripted table covers length {table.video_length} capacity "
                    f"{table.capacity}, video '{video.video_id}' needs length "
                    f"{video.length} capacity {capacity}"
                )
        return None

    def open(self, video: VideoSpec, capacity: int):
        """Tracker instance for one video; remote trackers must be closed."""
        if self.kind == "synthetic":
            return SyntheticTracker(video, self.sim)
        if self.kind == "scripted":
            return ScriptedTracker(self.table())
        return connect_remote_tracker(self.endpoint, video, capacity)


def cmd_gen(args) -> int:
    if args.count < 0:
        raise ConfigurationError(f"--count must be non-negative, got {args.count}")
    out = Path(args.out)
    videos_dir = out / "videos"
    videos_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(args.count):
        video = generate_video(args.family, args.length, args.seed + i)
        rel = f"videos/{video.video_id}.json"
        save_video(video, out / rel)
        entries.append({"video_id": video.video_id, "file": rel})
    _write_json(
        out / "manifest.json",
        {
            "family": args.family,
            "count": args.count,
            "length": args.length,
            "seed": args.seed,
            "videos": entries,
        },
    )
    print(f"wrote {args.count} {args.family} videos to {out}")
    return 0


def _load_train_config(args) -> TrainConfig:
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError(f"config {args.config} must hold a JSON object")
        config = TrainConfig.from_dict(data)
    else:
        config = TrainConfig()
    if args.seed is not None:
        config.seed = args.seed
    if args.gamma is not None:
        config.gamma = args.gamma
    if args.iterations is not None:
        config.iterations = args.iterations
    config.validate()
    return config


def _train_one(task: dict) -> dict:
    video = load_video(task["video_path"])
    spec = TrackerSpec(task["tracker"], SimParams(**task["sim"]))
    reason = spec.check_video(video, task["capacity"])
    if reason is not None:
        raise ConfigurationError(reason)
    out_dir = Path(task["out"]) / video.video_id
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = out_dir / "checkpoint.npz"
    history_path = out_dir / "history.jsonl"

    config = TrainConfig.from_dict(task["config"])
    state = None
    resumed = False
    if task["resume"] and checkpoint_path.exists():
        state, saved_config, saved_video = load_checkpoint(checkpoint_path)
        if saved_video != video.video_id:
            raise ConfigurationError(
                f"checkpoint {checkpoint_path} belongs to '{saved_video}', "
                f"not '{video.video_id}'"
            )
        if saved_config.to_dict() != config.to_dict():
            print(
                f"[{video.video_id}] resuming with the checkpoint's config "
                "(differs from the requested one; an explicit --iterations "
                "still applies)",
                file=sys.stderr,
            )
        config = saved_config
        if task["iterations_override"] is not None:
            config.iterations = task["iterations_override"]
            config.validate()
        resumed = True

    tracker = spec.open(video, task["capacity"])
    try:
        env_factory = lambda: TrackingEnv(  # noqa: E731
            video, tracker, capacity=task["capacity"], gamma=config.gamma
        )
        on_iteration = None
        if task["verbose"]:
            on_iteration = lambda s: print(  # noqa: E731
                f"[{video.video_id}] iteration {s.iteration}/{config.iterations} "
                f"return {s.mean_return:.4f} quality {s.mean_quality:.4f}",
                flush=True,
            )
        result = train(
            env_factory,
            config,
            state=state,
            max_seconds=task["max_seconds"],
            on_iteration=on_iteration,
        )
    finally:
        if hasattr(tracker, "close"):
            tracker.close()

    save_checkpoint(checkpoint_path, result.state, config, video.video_id)
    if resumed:
        append_history(history_path, result.history)
    else:
        save_history(history_path, result.history)
    _write_json(
        out_dir / "config.json",
        {
            "train": config.to_dict(),
            "capacity": task["capacity"],
            "tracker": task["tracker"],
            "sim": task["sim"],
            "video_id": video.video_id,
        },
    )
    return {
        "video_id": video.video_id,
        "iterations_done": result.state.iteration,
        "stopped_early": result.stopped_early,
        "checkpoint": str(checkpoint_path),
    }


def cmd_train(args) -> int:
    config = _load_train_config(args)
    paths = collect_video_paths(args.videos)
    sim = _sim_params(args)
    spec = TrackerSpec(args.tracker, sim)  # validates the spec early
    if spec.kind == "bridge" and args.jobs > 1:
        raise ConfigurationError("bridge trackers support --jobs 1 only")
    tasks = [
        {
            "video_path": str(p),
            "out": args.out,
            "config": config.to_dict(),
            "capacity": args.capacity,
            "tracker": args.tracker,
            "sim": {
                "hallucination_threshold": sim.hallucination_threshold,
                "similarity_floor": sim.similarity_floor,
            },
            "resume": args.resume,
            "iterations_override": args.iterations,
            "max_seconds": args.max_seconds,
            "verbose": args.jobs == 1,
        }
        for p in paths
    ]
    results = _run_tasks(_train_one, tasks, args.jobs)
    for r in sorted(results, key=lambda r: r["video_id"]):
        status = "stopped early" if r["stopped_early"] else "done"
        print(
            f"[{r['video_id']}] {status} after {r['iterations_done']} iterations; "
            f"checkpoint at {r['checkpoint']}"
        )
    return 0


def _make_policy(task: dict, video: VideoSpec, tracker):
    policy_text = task["policy"]
    if policy_text == "fifo":
        return FifoPolicy(), None
    if policy_text == "random":
        return RandomPolicy(_video_rng(task["seed"], video.video_id)), None
    if policy_text == "greedy":
        return GreedyPolicy(), None
    if policy_text == "oracle":
        solution = dp_oracle(
            video,
            tracker,
            capacity=task["capacity"],
            gamma=task["gamma"],
            state_budget=task["budget"],
        )
        return OraclePolicy(solution), solution
    if policy_text.startswith("checkpoint:"):
        state, _, _ = load_checkpoint(policy_text[len("checkpoint:"):])
        if state.params.input_width != video.length:
            raise _SkipVideo(
                f"checkpoint expects videos of length {state.params.input_width}, "
                f"'{video.video_id}' has length {video.length}"
            )
        if state.params.action_count != task["capacity"]:
            raise _SkipVideo(
                f"checkpoint was trained for capacity {state.params.action_count}, "
                f"eval requested {task['capacity']}"
            )
        return LearnedPolicy(state.params), None
    raise ConfigurationError(
        f"unrecognized policy {policy_text!r}; expected one of "
        f"{', '.join(BUILTIN_POLICIES)} or checkpoint:<path>"
    )


class _SkipVideo(Exception):
    """Raised inside per-video eval to record a named skip."""


def _eval_one(task: dict) -> dict:
    video = load_video(task["video_path"])
    spec = TrackerSpec(task["tracker"], SimParams(**task["sim"]))
    try:
        reason = spec.check_video(video, task["capacity"])
        if reason is not None:
            raise _SkipVideo(reason)
        tracker = spec.open(video, task["capacity"])
        try:
            policy, solution = _make_policy(task, video, tracker)
            env = TrackingEnv(
                video, tracker, capacity=task["capacity"], gamma=task["gamma"]
            )
            trace = rollout(env, policy.select)
        finally:
            if hasattr(tracker, "close"):
                tracker.close()
    except _SkipVideo as skip:
        return {"video_id": video.video_id, "skipped": True, "reason": str(skip)}
    results = frame_results_from_trace(trace)
    frames_path = Path(task["out"]) / "frames" / f"{video.video_id}.jsonl"
    write_frame_records(frames_path, results)
    if task["dump_policy"] and solution is not None:
        policy_path = Path(task["out"]) / "policies" / f"{video.video_id}.tsv"
        policy_path.parent.mkdir(parents=True, exist_ok=True)
        save_oracle_policy(policy_path, solution)
    summary = compute_summary(results)
    record = {"video_id": video.video_id, "skipped": False}
    record.update(summary.to_dict())
    record["episode_return"] = trace.final_return
    return record


def cmd_eval(args) -> int:
    sim = _sim_params(args)
    spec = TrackerSpec(args.tracker, sim)
    if spec.kind == "bridge" and args.jobs > 1:
        raise ConfigurationError("bridge trackers support --jobs 1 only")
    if args.dump_policy and args.policy != "oracle":
        raise ConfigurationError("--dump-policy only applies to the oracle policy")
    if (
        args.policy not in BUILTIN_POLICIES
        and not args.policy.startswith("checkpoint:")
    ):
        raise ConfigurationError(
            f"unrecognized policy {args.policy!r}; expected one of "
            f"{', '.join(BUILTIN_POLICIES)} or checkpoint:<path>"
        )
    out = Path(args.out)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    paths = collect_video_paths(args.videos)
    tasks = [
        {
            "video_path": str(p),
            "out": args.out,
            "policy": args.policy,
            "tracker": args.tracker,
            "sim": {
                "hallucination_threshold": sim.hallucination_threshold,
                "similarity_floor": sim.similarity_floor,
            },
            "capacity": args.capacity,
            "gamma": args.gamma,
            "seed": args.seed,
            "budget": args.budget,
            "dump_policy": args.dump_policy,
        }
        for p in paths
    ]
    records = sorted(_run_tasks(_eval_one, tasks, args.jobs), key=lambda r: r["video_id"])

    metrics_path = out / "metrics.jsonl"
    metrics_path.write_text(
        "".join(json.dumps(r, sort_keys=True) + "\n" for r in records),
        encoding="utf-8",
    )
    scored = [r for r in records if not r["skipped"]]
    aggregate = {
        "policy": args.policy,
        "tracker": args.tracker,
        "capacity": args.capacity,
        "gamma": args.gamma,
        "seed": args.seed,
        "videos": len(records),
        "skipped": len(records) - len(scored),
        "mean_quality": _mean(scored, "quality"),
        "mean_accuracy": _mean(scored, "accuracy"),
        "mean_robustness": _mean(scored, "robustness"),
        "mean_episode_return": _mean(scored, "episode_return"),
    }
    _write_json(out / "aggregate.json", aggregate)
    for r in records:
        if r["skipped"]:
            print(f"{r['video_id']}: skipped ({r['reason']})")
        else:
            print(
                f"{r['video_id']}: quality {r['quality']:.4f} accuracy "
                f"{r['accuracy']:.4f} robustness {r['robustness']:.4f}"
            )
    if scored:
        print(
            f"aggregate over {len(scored)} videos: quality "
            f"{aggregate['mean_quality']:.4f} accuracy {aggregate['mean_accuracy']:.4f} "
            f"robustness {aggregate['mean_robustness']:.4f}"
        )
    return 0


def _mean(records: list[dict], key: str) -> float | None:
    if not records:
        return None
    return sum(r[key] for r in records) / len(records)


def cmd_compare(args) -> int:
    methods = []
    for pair in args.runs:
        name, sep, path = pair.partition("=")
        if not sep or not name or not path:
            raise ConfigurationError(
                f"compare inputs look like NAME=metrics.jsonl, got {pair!r}"
            )
        methods.append((name, Path(path)))
    names = [name for name, _ in methods]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"duplicate method names: {', '.join(names)}")
    if args.baseline not in names:
        raise ConfigurationError(
            f"baseline {args.baseline!r} is not among {', '.join(names)}"
        )

    per_method: dict[str, dict[str, dict]] = {}
    for name, path in methods:
        records = {}
        for i, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{path}:{i}: malformed record: {exc}") from exc
            if not rec.get("skipped"):
                records[rec["video_id"]] = rec
        if not records:
            raise ConfigurationError(f"{path}: no scored videos for method {name!r}")
        per_method[name] = records

    base_ids = set(per_method[names[0]])
    for name in names[1:]:
        ids = set(per_method[name])
        if ids != base_ids:
            only_first = sorted(base_ids - ids)
            only_this = sorted(ids - base_ids)
            detail = []
            if only_first:
                detail.append(f"only in {names[0]}: {', '.join(only_first)}")
            if only_this:
                detail.append(f"only in {name}: {', '.join(only_this)}")
            raise ConfigurationError(
                f"methods cover different video sets ({'; '.join(detail)})"
            )

    rows = []
    for name in names:
        recs = list(per_method[name].values())
        rows.append(
            (
                name,
                sum(r["quality"] for r in recs) / len(recs),
                sum(r["accuracy"] for r in recs) / len(recs),
                sum(r["robustness"] for r in recs) / len(recs),
            )
        )
    text, records = comparison_table(rows, args.baseline)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "table.txt").write_text(text, encoding="utf-8")
    (out / "comparison.jsonl").write_text(
        "".join(json.dumps(r, sort_keys=True) + "\n" for r in records),
        encoding="utf-8",
    )
    print(text, end="")
    return 0


def _run_tasks(fn, tasks: list[dict], jobs: int):
    if jobs < 1:
        raise ConfigurationError(f"--jobs must be positive, got {jobs}")
    if jobs == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trackbank", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    gen = sub.add_parser("gen", parents=[], help="generate a synthetic video set")
    gen.add_argument("--family", required=True, choices=FAMILIES)
    gen.add_argument("--count", type=int, default=1)
    gen.add_argument("--length", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen)

    def add_tracker_args(p):
        p.add_argument("--tracker", default="synthetic")
        p.add_argument("--capacity", type=int, default=7)
        p.add_argument("--hallucination-threshold", type=float, default=0.5)
        p.add_argument("--similarity-floor", type=float, default=0.05)

    tr = sub.add_parser("train", help="train a memory policy per video")
    tr.add_argument("videos", nargs="+", help="video files, manifests, or directories")
    tr.add_argument("--out", required=True)
    tr.add_argument("--config", help="JSON file of TrainConfig fields")
    tr.add_argument("--seed", type=int, default=None)
    tr.add_argument("--gamma", type=float, default=None)
    tr.add_argument("--iterations", type=int, default=None)
    tr.add_argument("--max-seconds", type=float, default=None)
    tr.add_argument("--resume", action="store_true")
    tr.add_argument("--jobs", type=int, default=1)
    add_tracker_args(tr)
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="run a policy over videos and score it")
    ev.add_argument("--policy", required=True,
                    help="fifo | random | greedy | oracle | checkpoint:<path>")
    ev.add_argument("--videos", nargs="+", required=True)
    ev.add_argument("--out", required=True)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--gamma", type=float, default=1.0)
    ev.add_argument("--budget", type=int, default=DEFAULT_STATE_BUDGET,
                    help="state budget for the oracle")
    ev.add_argument("--jobs", type=int, default=1)
    ev.add_argument("--dump-policy", action="store_true",
                    help="write the oracle's decision table per video")
    add_tracker_args(ev)
    ev.set_defaults(func=cmd_eval)

    cp = sub.add_parser("compare", help="tabulate metric runs against a baseline")
    cp.add_argument("runs", nargs="+", metavar="NAME=metrics.jsonl")
    cp.add_argument("--baseline", required=True)
    cp.add_argument("--out", required=True)
    cp.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            parser.print_help(sys.stderr)
            return 1
        return args.func(args) or 0
    except (ConfigurationError, InvariantError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TrackbankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())
