"""Command line entry points.

`serve` runs the gateway; `train` fits the movement classifier from a CSV;
`analyze` summarizes an event log; `make-data` writes the synthetic
training corpus; `client` is a thin scripted wire-protocol client that
streams frames at the capture rate and saves whatever audio comes back.
"""

from __future__ import annotations

import argparse
import base64
import json
import logging
import sys
import time
from pathlib import Path

from .errors import AmavaError

logger = logging.getLogger(__name__)


def _cmd_serve(args) -> int:
    from .config import load_config
    from .server import create_app

    try:
        config = load_config(args.config)
    except AmavaError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2

    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.listen_host, port=config.listen_port, log_level="info")
    return 0


def _cmd_train(args) -> int:
    from .classifier import TrainConfig, save_model, train
    from .corpus import read_dataset_csv

    try:
        features, labels = read_dataset_csv(args.data)
    except (OSError, ValueError) as exc:
        print(f"cannot load dataset: {exc}", file=sys.stderr)
        return 2
    cfg = TrainConfig(
        learning_rate=args.lr,
        weight_decay=args.wd,
        batch_size=args.batch,
        patience=args.patience,
        max_epochs=args.max_epochs,
        seed=args.seed,
    )
    try:
        params, scaler, report = train(features, labels, cfg)
    except AmavaError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return 1
    save_model(params, scaler, args.out)
    print(
        f"trained {report.epochs_run} epochs (best {report.best_epoch}), "
        f"test accuracy {report.test_accuracy:.3f}, wrote {args.out}"
    )
    return 0


def _cmd_analyze(args) -> int:
    from .metrics import analyze_log, export

    try:
        report = analyze_log(args.log)
    except (OSError, AmavaError) as exc:
        print(f"cannot analyze log: {exc}", file=sys.stderr)
        return 2
    export(report, args.out)
    print(
        f"{args.out}: mean latency {report.mean_latency_ms:.1f} ms, "
        f"reordering {report.reordering_rate:.3f}"
    )
    return 0


def _cmd_make_data(args) -> int:
    from .corpus import write_default_dataset

    path = write_default_dataset(args.out, n_per_class=args.per_class, seed=args.seed)
    print(f"wrote {3 * args.per_class} rows to {path}")
    return 0


def _cmd_client(args) -> int:
    import cv2
    import numpy as np
    from websockets.sync.client import connect

    from .corpus import make_clip_pair

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def frame_iter():
        if args.frames:
            paths = sorted(Path(args.frames).glob("*.jpg")) + sorted(
                Path(args.frames).glob("*.jpeg")
            )
            for path in paths:
                yield path.read_bytes()
        else:
            # Synthetic session: alternating static and moving pairs.
            seed = 0
            while True:
                kind = "static" if (seed // 2) % 2 == 0 else "translating"
                first, second = make_clip_pair(kind, seed=seed, size=(320, 240))
                for frame in (first, second):
                    rgb = np.repeat(frame.pixels[:, :, None], 3, axis=2)
                    ok, buf = cv2.imencode(".jpg", rgb[:, :, ::-1], [cv2.IMWRITE_JPEG_QUALITY, 80])
                    if not ok:
                        raise RuntimeError("jpeg encode failed")
                    yield buf.tobytes()
                seed += 1

    with connect(args.url) as ws:
        ws.send(json.dumps({"kind": "hello", "client_version": "cli-client/0.1"}))
        ack = json.loads(ws.recv())
        if ack.get("kind") != "hello_ack":
            print(f"unexpected handshake reply: {ack}", file=sys.stderr)
            return 1
        session_id = ack["session_id"]
        interval = 1.0 / float(ack.get("capture_hz", 2.0))
        print(f"session {session_id}, sending {args.count} frames at {1/interval:.1f} Hz")

        sent = 0
        started = time.monotonic()
        frames = frame_iter()
        next_deadline = started
        clips = 0
        while sent < args.count:
            now = time.monotonic()
            if now >= next_deadline:
                try:
                    jpeg = next(frames)
                except StopIteration:
                    break
                ws.send(
                    json.dumps(
                        {
                            "kind": "frame",
                            "session_id": session_id,
                            "seq": sent,
                            "captured_at_ms": (now - started) * 1000.0,
                            "jpeg_b64": base64.b64encode(jpeg).decode("ascii"),
                        }
                    )
                )
                sent += 1
                next_deadline += interval
            try:
                raw = ws.recv(timeout=0.05)
            except TimeoutError:
                continue
            clips += _handle_server_message(raw, out_dir, clips)
        # linger briefly for in-flight audio
        deadline = time.monotonic() + args.linger
        while time.monotonic() < deadline:
            try:
                raw = ws.recv(timeout=0.2)
            except TimeoutError:
                continue
            clips += _handle_server_message(raw, out_dir, clips)
        ws.send(json.dumps({"kind": "bye", "session_id": session_id}))
    print(f"sent {sent} frames, saved {clips} clips to {out_dir}")
    return 0


def _handle_server_message(raw: str, out_dir: Path, clips: int) -> int:
    message = json.loads(raw)
    kind = message.get("kind")
    if kind == "audio":
        ext = "mp3" if message.get("mime") == "audio/mpeg" else "wav"
        path = out_dir / f"batch{message['batch_index']:04d}.{message['category']}.{ext}"
        path.write_bytes(base64.b64decode(message["audio_b64"]))
        return 1
    if kind == "caption":
        print(f"[{message['batch_index']}] {message['text']}")
    elif kind == "error":
        print(f"server error: {message.get('code')}: {message.get('message')}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amava")
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the gateway service")
    p_serve.add_argument("--config", required=True, help="key = value configuration file")
    p_serve.set_defaults(func=_cmd_serve)

    p_train = sub.add_parser("train", help="train the movement classifier")
    p_train.add_argument("--data", required=True, help="CSV with frame_diff,flow_mag,label")
    p_train.add_argument("--out", required=True, help="model file to write")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--lr", type=float, default=0.001)
    p_train.add_argument("--wd", type=float, default=1e-5)
    p_train.add_argument("--batch", type=int, default=64)
    p_train.add_argument("--patience", type=int, default=5)
    p_train.add_argument("--max-epochs", type=int, default=200, dest="max_epochs")
    p_train.set_defaults(func=_cmd_train)

    p_analyze = sub.add_parser("analyze", help="summarize an event log")
    p_analyze.add_argument("--log", required=True, help="NDJSON event log")
    p_analyze.add_argument("--out", required=True, help="CSV summary to write")
    p_analyze.set_defaults(func=_cmd_analyze)

    p_data = sub.add_parser("make-data", help="write the synthetic training corpus")
    p_data.add_argument("--out", required=True)
    p_data.add_argument("--per-class", type=int, default=200, dest="per_class")
    p_data.add_argument("--seed", type=int, default=0)
    p_data.set_defaults(func=_cmd_make_data)

    p_client = sub.add_parser("client", help="stream frames to a running server")
    p_client.add_argument("--url", default="ws://127.0.0.1:8777/ws")
    p_client.add_argument("--frames", default="", help="directory of JPEGs (default: synthetic)")
    p_client.add_argument("--count", type=int, default=20, help="frames to send")
    p_client.add_argument("--out", default="amava-clips", help="directory for received audio")
    p_client.add_argument("--linger", type=float, default=3.0, help="seconds to wait for audio")
    p_client.set_defaults(func=_cmd_client)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
