"""avlpack command line: export-global, export-local, verify.

export-global reads a JSON manifest:

    {"dim": 8, "output": "tiles.avld",
     "entries": [{"id": 0, "source": "d0.npy"}, ...]}

Sources are .npy vectors (or .npz with a ``descriptor`` key), resolved
relative to the manifest file. export-local reads the same shape of
manifest with an ``output_dir`` and per-entry .npz sources holding
``keypoints`` (k, 3) and ``descriptors`` (k, m); it writes one
``<id>.avlf`` (zero-padded to five digits) per entry.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .formats import ExportError, ExportManifest, export_global, export_local
from .reader import MalformedFile, inspect


def _load_manifest(path: Path) -> dict:
    try:
        spec = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ExportError(f"cannot read manifest {path}: {exc}") from exc
    if "entries" not in spec or not isinstance(spec["entries"], list):
        raise ExportError(f"{path}: manifest needs an 'entries' list")
    return spec


def _load_vector(root: Path, source: str) -> np.ndarray:
    p = root / source
    if p.suffix == ".npz":
        with np.load(p) as z:
            if "descriptor" not in z:
                raise ExportError(f"{p}: .npz source needs a 'descriptor' array")
            return z["descriptor"]
    return np.load(p)


def cmd_export_global(args) -> int:
    spec = _load_manifest(args.manifest)
    root = args.manifest.parent
    if "dim" not in spec:
        raise ExportError(f"{args.manifest}: manifest needs 'dim'")
    out = args.out or spec.get("output")
    if out is None:
        raise ExportError("no output path (manifest 'output' or --out)")
    entries = tuple(
        (int(e["id"]), _load_vector(root, e["source"])) for e in spec["entries"]
    )
    manifest = ExportManifest(
        entries=entries, dim=int(spec["dim"]), out_path=root / out
        if not Path(out).is_absolute()
        else Path(out),
    )
    path = export_global(manifest)
    print(f"wrote {path} count={len(entries)} dim={spec['dim']}")
    return 0


def cmd_export_local(args) -> int:
    spec = _load_manifest(args.manifest)
    root = args.manifest.parent
    out_dir = args.out or spec.get("output_dir")
    if out_dir is None:
        raise ExportError("no output dir (manifest 'output_dir' or --out)")
    out_root = Path(out_dir) if Path(out_dir).is_absolute() else root / out_dir
    out_root.mkdir(parents=True, exist_ok=True)
    for e in spec["entries"]:
        ident = int(e["id"])
        src = root / e["source"]
        with np.load(src) as z:
            if "keypoints" not in z or "descriptors" not in z:
                raise ExportError(
                    f"{src}: needs 'keypoints' and 'descriptors' arrays"
                )
            export_local(
                ident, z["keypoints"], z["descriptors"],
                out_root / f"{ident:05d}.avlf",
            )
    print(f"wrote {len(spec['entries'])} AVLF files to {out_root}")
    return 0


def cmd_verify(args) -> int:
    rep = inspect(args.path)
    print(rep.summary())
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="avlpack",
        description="Pack externally computed features into AVLD/AVLF files",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export-global", help="manifest of vectors -> one AVLD")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path)
    p.set_defaults(fn=cmd_export_global)

    p = sub.add_parser("export-local", help="manifest of npz files -> AVLF per image")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path)
    p.set_defaults(fn=cmd_export_local)

    p = sub.add_parser("verify", help="parse a file and print count/dim/checksum")
    p.add_argument("path", type=Path)
    p.set_defaults(fn=cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ExportError, MalformedFile, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
