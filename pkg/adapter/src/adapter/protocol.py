"""Line-delimited JSON request loop on standard input/output.

Announces `{"protocol": "bilevel-bo/1"}` first, then answers one request per
line: `{"id": n, "params": {...}}` becomes either an ok response carrying
train_loss/val_metric/aux or a same-id error response. Requests are handled
strictly one at a time; the loop ends cleanly at EOF.
"""

from __future__ import annotations

import json
import sys

from adapter.training import (
    AdapterConfig,
    AdapterError,
    TrainingDiverged,
    default_dataset,
    train_once,
)

PROTOCOL_VERSION = "bilevel-bo/1"


def _emit(stream, doc: dict) -> None:
    stream.write(json.dumps(doc, separators=(",", ":")) + "\n")
    stream.flush()


def serve(cfg: AdapterConfig, stdin=None, stdout=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    dataset = default_dataset(cfg)
    _emit(stdout, {"protocol": PROTOCOL_VERSION})

    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as err:
            _emit(stdout, {"id": -1, "status": "error", "message": f"bad request: {err.msg}"})
            continue
        request_id = request.get("id") if isinstance(request, dict) else None
        if not isinstance(request_id, int):
            _emit(stdout, {"id": -1, "status": "error", "message": "request lacks an integer id"})
            continue
        try:
            outcome = train_once(request.get("params", {}), cfg, dataset)
        except (AdapterError, TrainingDiverged) as err:
            _emit(stdout, {"id": request_id, "status": "error", "message": str(err)})
            continue
        _emit(
            stdout,
            {
                "id": request_id,
                "status": "ok",
                "train_loss": outcome.train_loss,
                "val_metric": outcome.val_accuracy,
                "aux": {
                    "epochs_run": outcome.epochs_run,
                    "stopped_early": outcome.stopped_early,
                },
            },
        )
    return 0
