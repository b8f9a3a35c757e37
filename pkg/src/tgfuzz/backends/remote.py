"""Out-of-process backend speaking the framed stdio bridge protocol.

Frames are length-prefixed JSON headers on the child's stdin/stdout;
tensor payloads travel as sidecar files referenced by path, never inline,
so host-library logging cannot corrupt the stream (the child's stderr is
a free side channel).  A dead or wedged child never takes the harness
down: every failure surfaces as a BuildFailure/RunFailure value.

Protocol (version 1):
  child -> {"type": "hello", "protocol_version": 1, ...} on startup
  {"op": "build", "model_path": P}            -> {"status": "ok", "handle": H}
                                               | {"status": "build_failure", "trace": T}
  {"op": "execute", "handle": H,
   "inputs_path": P?, "outputs_path": P}      -> {"status": "ok", "outputs_path": P,
                                                  "behavior": []}
                                               | {"status": "run_failure", "trace": T}
  {"op": "shutdown"}                          -> {"status": "ok"}, then exit 0
  unknown op                                  -> {"status": "error", "trace": T}
"""

from __future__ import annotations

import json
import shlex
import subprocess
import tempfile
import uuid
from pathlib import Path

from ..graph import ModelGraph
from ..model_io import read_sidecar, serialize, write_sidecar
from ..weights import ValueTensor, graph_weights
from . import Backend, BuildFailure, RunFailure

PROTOCOL_VERSION = 1
_HANDSHAKE_TIMEOUT = 30.0
_CALL_TIMEOUT = 120.0


def write_frame(stream, doc: dict) -> None:
    payload = json.dumps(doc).encode()
    stream.write(f"{len(payload)}\n".encode())
    stream.write(payload)
    stream.flush()


def read_frame(stream) -> dict:
    header = stream.readline()
    if not header:
        raise EOFError("bridge stream closed")
    length = int(header.decode().strip())
    payload = stream.read(length)
    if payload is None or len(payload) != length:
        raise EOFError("short bridge frame")
    return json.loads(payload.decode())


class BridgeBackend(Backend):
    """Runs models on a bridge subprocess; restarts it after a crash."""

    def __init__(self, command: str, registry, workdir: str | None = None):
        self.command = command
        self.registry = registry
        self.id = f"bridge:{command.split()[0].rsplit('/', 1)[-1]}"
        self._proc: subprocess.Popen | None = None
        self._dir = Path(workdir) if workdir else Path(
            tempfile.mkdtemp(prefix="tgfuzz_bridge_"))
        self._dir.mkdir(parents=True, exist_ok=True)

    # -- process management -------------------------------------------------

    def _ensure_proc(self) -> subprocess.Popen:
        if self._proc is not None and self._proc.poll() is None:
            return self._proc
        self._proc = subprocess.Popen(
            shlex.split(self.command),
            stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.DEVNULL,
        )
        hello = read_frame(self._proc.stdout)
        if hello.get("type") != "hello" or hello.get("protocol_version") != PROTOCOL_VERSION:
            raise BuildFailure(f"bad bridge handshake: {hello}")
        return self._proc

    def _call(self, doc: dict) -> dict:
        proc = self._ensure_proc()
        try:
            write_frame(proc.stdin, doc)
            return read_frame(proc.stdout)
        except (EOFError, BrokenPipeError, OSError) as e:
            code = proc.poll()
            self._proc = None
            raise RunFailure(
                f"bridge process died (exit {code}) during {doc.get('op')}: {e}")

    def close(self):
        if self._proc is not None and self._proc.poll() is None:
            try:
                write_frame(self._proc.stdin, {"op": "shutdown"})
                self._proc.wait(timeout=10)
            except Exception:
                self._proc.kill()
        self._proc = None

    # -- BackendInterface ----------------------------------------------------

    def build(self, graph: ModelGraph, weight_overrides=None):
        tag = uuid.uuid4().hex[:12]
        model_path = self._dir / f"model_{tag}.json"
        sidecar_path = self._dir / f"model_{tag}.bin"
        weights = graph_weights(graph)
        if weight_overrides:
            weights.update(weight_overrides)
        tensors = {
            (nid, slot): vt
            for nid, tlist in weights.items()
            for slot, vt in enumerate(tlist)
        }
        write_sidecar(sidecar_path, tensors)
        serialize(graph, model_path, self.registry.version,
                  sidecar=sidecar_path.name)
        try:
            reply = self._call({"op": "build", "model_path": str(model_path)})
        except RunFailure as e:
            raise BuildFailure(str(e)) from None
        if reply.get("status") == "ok":
            return reply["handle"]
        raise BuildFailure(reply.get("trace", f"bridge build failed: {reply}"))

    def execute(self, handle, inputs: list[ValueTensor]):
        tag = uuid.uuid4().hex[:12]
        in_path = self._dir / f"inputs_{tag}.bin"
        out_path = self._dir / f"outputs_{tag}.bin"
        write_sidecar(in_path, {("input", i): vt for i, vt in enumerate(inputs)})
        reply = self._call({
            "op": "execute", "handle": handle,
            "inputs_path": str(in_path), "outputs_path": str(out_path),
        })
        if reply.get("status") != "ok":
            raise RunFailure(reply.get("trace", f"bridge execute failed: {reply}"))
        tensors = read_sidecar(reply.get("outputs_path", str(out_path)))
        outputs = [tensors[k] for k in sorted(tensors) if k[0] == "output"]
        # external backends report no path ids; behavior stays empty
        return outputs, set(reply.get("behavior", []))
