"""Command-line entry point: ask, import, tma, simulate.

Report-producing subcommands write delimited output (CSV or line
statistics) and can render a matplotlib figure next to it via
``--figure``.  All commands are deterministic given identical inputs and
seeds.  Exit codes: 0 success, 2 bad input or validation failure, 3
backend unreachable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .attention import GainSchedule, schedule_grid
from .errors import FrameloopError, ValidationError
from .gateway import BackendConfig, Gateway, mock_config
from .gradients import PolicyGradConfig
from .loop import LoopConfig, LoopError, run_loop, write_trace
from .retrieval import RetrievalConfig
from .simulate import least_squares_slope, make_env, run_numeric_loop
from .store import EmbeddingStore, file_size, load_store, save_store

API_KEY_ENV = "FRAMELOOP_API_KEY"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BACKEND = 3


def _fail(message: str, code: int = EXIT_USAGE) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frameloop",
        description="Evidence-loop toolkit: question loops over cached frame embeddings, "
        "attention gain schedules, and a planted-environment simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ask = sub.add_parser("ask", help="run the evidence loop on one question")
    ask.add_argument("--store", required=True, help="UVEB store file")
    ask.add_argument("--question", required=True, help="question text")
    ask.add_argument("--backend", choices=["mock", "http"], default="mock")
    ask.add_argument("--endpoint", default="", help="chat-completions URL (http backend)")
    ask.add_argument("--model", default="", help="backend model name (http backend)")
    ask.add_argument("--timeout", type=float, default=30.0, help="per-call timeout seconds")
    ask.add_argument("--mock-score", type=float, default=0.8,
                     help="evaluator score the default mock returns")
    ask.add_argument("--max-rounds", type=int, default=3)
    ask.add_argument("--stop-threshold", type=float, default=0.7)
    ask.add_argument("--caption-seeds", type=int, default=16)
    ask.add_argument("--mmr-lambda", type=float, default=0.5)
    ask.add_argument("--tau", type=float, default=1.0, help="retrieval softmax temperature")
    ask.add_argument("--trace", default="", help="write the round trace to this JSON file")
    ask.add_argument("--format", choices=["text", "structured"], default="text")

    imp = sub.add_parser("import", help="build a UVEB store from text matrices")
    imp.add_argument("--input", required=True,
                     help="directory holding embeddings.txt (one row per frame) and timestamps.txt")
    imp.add_argument("--out", required=True, help="output store path")

    tma = sub.add_parser("tma", help="dump the attention gain schedules on a uniform grid")
    tma.add_argument("--samples", type=int, default=101, help="grid points (>= 2)")
    tma.add_argument("--lambda-txt", type=float, default=0.3)
    tma.add_argument("--lambda-img", type=float, default=0.3)
    tma.add_argument("--txt-breakpoint", type=float, default=0.4)
    tma.add_argument("--img-breakpoint", type=float, default=0.6)
    tma.add_argument("--out", default="", help="CSV path (default: stdout)")
    tma.add_argument("--figure", default="", help="also render the curves to this image file")

    sim = sub.add_parser("simulate", help="planted-environment policy-gradient experiment")
    sim.add_argument("--seeds", type=int, default=100, help="independent trajectories")
    sim.add_argument("--steps", type=int, default=20, help="updates per trajectory")
    sim.add_argument("--frames", type=int, default=32, help="pool size")
    sim.add_argument("--dim", type=int, default=16, help="embedding dimension")
    sim.add_argument("--planted", type=int, default=4, help="planted evidence frames")
    sim.add_argument("--k", type=int, default=4, help="frames sampled per update")
    sim.add_argument("--eta", type=float, default=0.5, help="step size")
    sim.add_argument("--tau", type=float, default=None,
                     help="policy temperature (default: library default)")
    sim.add_argument("--baseline", choices=["zero", "running_mean"], default="running_mean")
    sim.add_argument("--out", default="", help="per-step rewards CSV path")
    sim.add_argument("--figure", default="", help="render reward trajectories to this image file")

    return parser


# ---------------------------------------------------------------------------
# ask

def cmd_ask(args) -> int:
    store_path = Path(args.store)
    if not store_path.exists():
        return _fail(f"store file not found: {store_path}")
    try:
        store = load_store(store_path)
        retrieval = RetrievalConfig(softmax_temperature=args.tau, mmr_lambda=args.mmr_lambda)
        config = LoopConfig(
            max_rounds=args.max_rounds,
            stop_threshold=args.stop_threshold,
            retrieval=retrieval,
            seed_frames_for_caption=args.caption_seeds,
        )
        if args.backend == "mock":
            backend = mock_config(evaluator_score=args.mock_score)
        else:
            backend = BackendConfig(
                kind="http",
                endpoint=args.endpoint,
                model_name=args.model,
                api_key=os.environ.get(API_KEY_ENV, ""),
                timeout=args.timeout,
            )
        gateway = Gateway(backend)
    except FrameloopError as exc:
        return _fail(str(exc))

    try:
        answer, trace = run_loop(args.question, store, gateway, config)
    except LoopError as exc:
        if args.trace:
            write_trace(exc.trace, args.trace)
        return _fail(str(exc), EXIT_BACKEND)
    except FrameloopError as exc:
        return _fail(str(exc))

    if args.trace:
        write_trace(trace, args.trace)
    if args.format == "structured":
        payload = {
            "answer": answer,
            "rounds": len(trace),
            "trace": [record.to_trace_dict() for record in trace],
        }
        print(json.dumps(payload, indent=2))
    else:
        print(answer)
    return EXIT_OK


# ---------------------------------------------------------------------------
# import

def _read_matrix(path: Path) -> np.ndarray:
    rows: list[list[float]] = []
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(tok) for tok in line.split()])
        except ValueError as exc:
            raise ValidationError(f"{path.name}:{line_no}: {exc}") from exc
    if not rows:
        raise ValidationError(f"{path.name} holds no rows")
    width = len(rows[0])
    for line_no, row in enumerate(rows, start=1):
        if len(row) != width:
            raise ValidationError(
                f"{path.name}: ragged rows ({len(row)} values at row {line_no}, expected {width})"
            )
    return np.asarray(rows, dtype=np.float64)


def cmd_import(args) -> int:
    src = Path(args.input)
    emb_path = src / "embeddings.txt"
    ts_path = src / "timestamps.txt"
    if not src.is_dir():
        return _fail(f"input directory not found: {src}")
    if not emb_path.exists() or not ts_path.exists():
        return _fail(f"expected {emb_path.name} and {ts_path.name} under {src}")
    try:
        matrix = _read_matrix(emb_path)
        stamps = _read_matrix(ts_path).ravel()
        if stamps.shape[0] != matrix.shape[0]:
            raise ValidationError(
                f"{stamps.shape[0]} timestamps for {matrix.shape[0]} embedding rows"
            )
        # rows already unit length (within the store tolerance) pass through
        # untouched so a text export of a store re-imports bit-identically
        norms = np.linalg.norm(matrix, axis=1)
        if np.any(norms <= 1e-12):
            raise ValidationError("embeddings.txt contains a near-zero row")
        off = np.abs(norms - 1.0) > 1e-6
        matrix[off] /= norms[off, None]
        store = EmbeddingStore(matrix, stamps, normalized=True)
        save_store(store, args.out)
    except FrameloopError as exc:
        return _fail(str(exc))
    except OSError as exc:
        return _fail(f"cannot write store: {exc}")
    print(
        f"wrote {args.out}: N={store.n_frames} d={store.dim} "
        f"({file_size(store.n_frames, store.dim)} bytes)"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# tma

def _write_report(text: str, out: str) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_tma(args) -> int:
    try:
        schedule = GainSchedule(
            lambda_txt=args.lambda_txt,
            lambda_img=args.lambda_img,
            txt_breakpoint=args.txt_breakpoint,
            img_breakpoint=args.img_breakpoint,
        )
        rows = schedule_grid(args.samples, schedule)
    except FrameloopError as exc:
        return _fail(str(exc))
    lines = ["u,alpha_txt,alpha_img"]
    lines += [f"{u!r},{a_txt!r},{a_img!r}" for u, a_txt, a_img in rows]
    try:
        _write_report("\n".join(lines) + "\n", args.out)
        if args.figure:
            from .figures import gain_schedule_figure, save_figure

            save_figure(gain_schedule_figure(rows), args.figure)
    except OSError as exc:
        return _fail(f"cannot write output: {exc}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> int:
    if args.seeds < 1 or args.steps < 1:
        return _fail("seeds and steps must be >= 1")
    try:
        grad_kwargs = dict(step_size=args.eta, baseline_mode=args.baseline)
        if args.tau is not None:
            grad_kwargs["temperature"] = args.tau
        config = PolicyGradConfig(**grad_kwargs)
        trajectories = []
        for seed in range(args.seeds):
            env = make_env(args.frames, args.dim, args.planted, seed)
            retrieval = RetrievalConfig(rng_seed=seed)
            trajectories.append(run_numeric_loop(env, args.steps, config, retrieval, k=args.k))
    except FrameloopError as exc:
        return _fail(str(exc))

    window = max(1, min(10, args.steps // 2))
    improvements = []
    slopes = []
    out_lines = ["seed,step,reward"]
    for traj in trajectories:
        first = float(np.mean(traj.rewards[:window]))
        last = float(np.mean(traj.rewards[-window:]))
        improvements.append(last - first)
        slopes.append(least_squares_slope(traj.rewards))
        print(
            f"seed {traj.seed:3d}: first{window}={first:.6f} last{window}={last:.6f} "
            f"improvement={last - first:+.6f}"
        )
        out_lines += [
            f"{traj.seed},{step},{r!r}" for step, r in enumerate(traj.rewards, start=1)
        ]
    print(
        f"aggregate: seeds={args.seeds} steps={args.steps} eta={args.eta!r} "
        f"mean_improvement={float(np.mean(improvements)):.6f} "
        f"mean_drift_slope={float(np.mean(slopes)):.6f}"
    )
    try:
        if args.out:
            Path(args.out).write_text("\n".join(out_lines) + "\n", encoding="utf-8")
        if args.figure:
            from .figures import reward_trajectory_figure, save_figure

            save_figure(reward_trajectory_figure([t.rewards for t in trajectories]), args.figure)
    except OSError as exc:
        return _fail(f"cannot write output: {exc}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "ask": cmd_ask,
        "import": cmd_import,
        "tma": cmd_tma,
        "simulate": cmd_simulate,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
