"""Command-line shim applying the SystemVerilog-to-Verilog stub transform.

The transform is purely textual and bit-exact: every whole-word ``logic``
token becomes ``wire``; all other bytes pass through untouched.  Word
characters are ASCII ``[A-Za-z0-9_]``, so ``my_logic_bus`` is not rewritten.
"""

from __future__ import annotations

import os
import re
import sys

_LOGIC_TOKEN = re.compile(rb"\blogic\b")


def transform(data: bytes) -> bytes:
    return _LOGIC_TOKEN.sub(b"wire", data)


def main(argv=None) -> int:
    args = sys.argv[1:] if argv is None else list(argv)
    if len(args) != 2:
        print("usage: python -m socbuild._sv2v_tool INPUT OUTPUT", file=sys.stderr)
        return 2
    src, dst = args
    with open(src, "rb") as f:
        data = f.read()
    parent = os.path.dirname(os.path.abspath(dst))
    os.makedirs(parent, exist_ok=True)
    with open(dst, "wb") as f:
        f.write(transform(data))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
