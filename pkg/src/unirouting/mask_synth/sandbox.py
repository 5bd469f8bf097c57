"""Out-of-process execution of candidate mask programs.

Each candidate runs in a fresh interpreter with a scratch working directory, an
empty environment and resource limits.  Requests and responses are single JSON
lines; every response must arrive within the per-step timeout.
"""

from __future__ import annotations

import json
import os
import select
import shutil
import subprocess
import sys
import tempfile
import time

CHILD = os.path.join(os.path.dirname(os.path.abspath(__file__)), "_child.py")
MEMORY_LIMIT = 1 << 30


class SandboxFailure(RuntimeError):
    """The candidate crashed, timed out or answered out of protocol."""

    def __init__(self, kind, detail=""):
        super().__init__(f"{kind}: {detail}" if detail else kind)
        self.kind = kind
        self.detail = detail


def _limits():
    try:
        import resource
        resource.setrlimit(resource.RLIMIT_AS, (MEMORY_LIMIT, MEMORY_LIMIT))
        resource.setrlimit(resource.RLIMIT_CORE, (0, 0))
    except (ImportError, ValueError, OSError):
        pass


class SandboxRunner:
    """One candidate process; restart() after any failure."""

    def __init__(self, source: str, timeout_ms: int = 2000):
        self.timeout = timeout_ms / 1000.0
        self.dir = tempfile.mkdtemp(prefix="mask-cand-")
        self.path = os.path.join(self.dir, "candidate.py")
        with open(self.path, "w", encoding="utf-8") as fh:
            fh.write(source)
        self.proc = None
        self._buf = b""

    def start(self):
        self.close_process()
        env = {"PATH": os.environ.get("PATH", "/usr/bin:/bin"), "PYTHONHASHSEED": "0"}
        self.proc = subprocess.Popen(
            [sys.executable, "-I", "-S", CHILD, self.path],
            stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.DEVNULL,
            cwd=self.dir, env=env, preexec_fn=_limits if os.name == "posix" else None,
        )
        self._buf = b""

    def request(self, message: dict) -> dict:
        if self.proc is None or self.proc.poll() is not None:
            raise SandboxFailure("crash", "process is not running")
        try:
            self.proc.stdin.write((json.dumps(message) + "\n").encode())
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise SandboxFailure("crash", str(exc)) from None
        line = self._readline()
        try:
            reply = json.loads(line)
        except ValueError:
            raise SandboxFailure("malformed", line[:200].decode(errors="replace")) from None
        if not isinstance(reply, dict):
            raise SandboxFailure("malformed", "reply is not an object")
        if "error" in reply:
            raise SandboxFailure("error", str(reply["error"])[:200])
        return reply

    def _readline(self) -> bytes:
        fd = self.proc.stdout.fileno()
        deadline = time.monotonic() + self.timeout
        while b"\n" not in self._buf:
            left = deadline - time.monotonic()
            if left <= 0:
                self.close_process()
                raise SandboxFailure("timeout", f"no reply within {self.timeout * 1000:.0f} ms")
            ready, _, _ = select.select([fd], [], [], left)
            if not ready:
                continue
            chunk = os.read(fd, 65536)
            if not chunk:
                self.close_process()
                raise SandboxFailure("crash", "process exited")
            self._buf += chunk
        line, _, self._buf = self._buf.partition(b"\n")
        return line

    def close_process(self):
        if self.proc is not None:
            if self.proc.poll() is None:
                self.proc.kill()
            self.proc.wait()
            for stream in (self.proc.stdin, self.proc.stdout):
                try:
                    stream.close()
                except OSError:
                    pass
            self.proc = None

    def close(self):
        self.close_process()
        shutil.rmtree(self.dir, ignore_errors=True)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
