"""Shared fixture-building helpers for the test suite."""

from __future__ import annotations

import json
import os
from pathlib import Path


def write_manifest(ip_dir: Path, data: dict) -> Path:
    ip_dir.mkdir(parents=True, exist_ok=True)
    path = ip_dir / "ip.json"
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    return path


def make_diamond_workspace(root_dir: Path) -> Path:
    """Four IPs: top -> {b, c}, b -> d, c -> d, one Verilog file each."""
    layout = {
        "d": [],
        "b": ["v::l::d"],
        "c": ["v::l::d"],
        "top": ["v::l::b", "v::l::c"],
    }
    for name, links in layout.items():
        ip_dir = root_dir / name
        (ip_dir / "rtl").mkdir(parents=True, exist_ok=True)
        (ip_dir / "rtl" / f"{name}.v").write_text(f"module {name}; endmodule\n")
        write_manifest(
            ip_dir,
            {
                "ip": f"v::l::{name}::1.0.0",
                "sources": {"verilog": [f"rtl/{name}.v"]},
                "links": links,
            },
        )
    return root_dir


def diamond_file_order(root_dir: Path) -> list[str]:
    return [
        str(root_dir / name / "rtl" / f"{name}.v")
        for name in ("d", "b", "c", "top")
    ]


def rewrite_same_length(path: Path) -> None:
    """Replace the file's bytes with different bytes of identical length."""
    data = bytearray(path.read_bytes())
    if not data:
        raise ValueError("cannot rewrite an empty file in place")
    data[0] = (data[0] + 1) % 256
    path.write_bytes(bytes(data))
