"""Shared fixtures for the tool safety checks."""

from __future__ import annotations

import os
from pathlib import Path


def escape_attempts(root: Path) -> list[str]:
    """Fifteen paths that must all be denied by a sandbox rooted at ``root``.

    Creates two symlinks inside ``root`` pointing outside it.
    """
    outside = root.parent / f"{root.name}_outside"
    outside.mkdir(exist_ok=True)
    (outside / "secret.txt").write_text("top secret", encoding="utf-8")
    os.symlink(outside, root / "link_dir")
    os.symlink(outside / "secret.txt", root / "link_file")
    sibling = f"{root}_outside/secret.txt"  # shares the root's string prefix
    return [
        "../../etc/passwd",
        f"../{root.name}_outside/secret.txt",
        "/etc/passwd",
        "a/../../x.txt",
        "./../x.txt",
        "sub/dir/../../../x.txt",
        str(outside / "secret.txt"),
        f"{root}/../{root.name}_outside/secret.txt",
        "link_dir/secret.txt",
        "link_file",
        sibling,
        "//etc/passwd",
        "/proc/self/environ",
        "ok\x00/../../etc/passwd",
        "",
    ]
