"""Black boxes served by an external process over a line protocol.

Each query is one line ``x_1 ... x_d a_1 ... a_d``; the process answers with one
line holding ``y``.
"""

from __future__ import annotations

import subprocess

import numpy as np


class ExternalBlackBox:
    def __init__(self, command, cwd=None):
        self.command = command
        self.proc = subprocess.Popen(command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                     text=True, bufsize=1, cwd=cwd)

    def __call__(self, x, a) -> float:
        if self.proc.poll() is not None:
            raise RuntimeError(f"external environment {self.command!r} exited "
                               f"with code {self.proc.returncode}")
        vals = np.concatenate([np.atleast_1d(x), np.atleast_1d(a)]).astype(float)
        self.proc.stdin.write(" ".join(repr(float(v)) for v in vals) + "\n")
        self.proc.stdin.flush()
        line = self.proc.stdout.readline()
        if not line:
            raise RuntimeError(f"external environment {self.command!r} closed its output")
        try:
            return float(line.strip())
        except ValueError as exc:
            raise RuntimeError(f"malformed response {line.strip()!r}") from exc

    def close(self):
        if self.proc.poll() is None:
            self.proc.stdin.close()
            self.proc.wait(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
