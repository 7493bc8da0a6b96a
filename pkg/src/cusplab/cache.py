"""On-disk cache of eigen-decompositions.

File layout::

    b"CUSPLAB-EIG\\n" | uint32 header length | JSON header | npz payload

The header records the format version, problem hash, tol, k and the SHA-256
of the payload. The payload stores the eigenpairs and the CSR arrays of the
pencil so that ``verify`` can recompute a residual without rebuilding meshes.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import shutil
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .linalg import EigenPairSet, as_form, pencil_digest, solve_generalized

MAGIC = b"CUSPLAB-EIG\n"
FORMAT_VERSION = 1
ENV_VAR = "LAB_CACHE_DIR"


class CacheError(ValueError):
    pass


def default_cache_dir() -> Path:
    env = os.environ.get(ENV_VAR)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "cusplab"


@dataclass(frozen=True)
class CacheEntry:
    path: Path
    header: dict

    @property
    def key(self) -> str:
        return self.header["problem_hash"]


def _pack(pairs: EigenPairSet, A, B, header: dict) -> bytes:
    Am, Bm = as_form(A).matrix, as_form(B).matrix
    buf = io.BytesIO()
    np.savez(
        buf,
        eigenvalues=pairs.eigenvalues,
        vectors=pairs.vectors,
        sup_norms=pairs.sup_norms,
        A_data=Am.data, A_indices=Am.indices, A_indptr=Am.indptr,
        B_data=Bm.data, B_indices=Bm.indices, B_indptr=Bm.indptr,
        shape=np.asarray(Am.shape),
    )
    payload = buf.getvalue()
    header = dict(header, format_version=FORMAT_VERSION, sha256=hashlib.sha256(payload).hexdigest())
    hbytes = json.dumps(header, sort_keys=True).encode()
    return MAGIC + struct.pack("<I", len(hbytes)) + hbytes + payload


def read_header(path: Path) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise CacheError(f"{path}: bad magic")
    off = len(MAGIC)
    if len(raw) < off + 4:
        raise CacheError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<I", raw[off : off + 4])
    try:
        header = json.loads(raw[off + 4 : off + 4 + hlen])
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CacheError(f"{path}: unreadable header") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CacheError(f"{path}: format version {header.get('format_version')} != {FORMAT_VERSION}")
    payload = raw[off + 4 + hlen :]
    if hashlib.sha256(payload).hexdigest() != header.get("sha256"):
        raise CacheError(f"{path}: checksum mismatch")
    return header, payload


def _unpack(path: Path):
    header, payload = read_header(path)
    z = np.load(io.BytesIO(payload))
    shape = tuple(z["shape"])
    A = sp.csr_matrix((z["A_data"], z["A_indices"], z["A_indptr"]), shape=shape)
    B = sp.csr_matrix((z["B_data"], z["B_indices"], z["B_indptr"]), shape=shape)
    meta = {k: header[k] for k in ("problem_hash", "tol", "k", "dimension") if k in header}
    pairs = EigenPairSet(z["eigenvalues"], z["vectors"], z["sup_norms"], meta)
    return header, pairs, A, B


class EigenCache:
    def __init__(self, root: str | Path | None = None):
        self.root = Path(root) if root is not None else default_cache_dir()

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.eig"

    def key_for(self, A, B, k: int, tol: float) -> str:
        return pencil_digest(A, B, k, tol)

    def put(self, pairs: EigenPairSet, A, B, k: int, tol: float, label: str = "") -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        key = self.key_for(A, B, k, tol)
        header = {"problem_hash": key, "tol": tol, "k": k, "dimension": as_form(A).dimension, "label": label}
        blob = _pack(pairs, A, B, header)
        fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, self._path(key))
        return self._path(key)

    def get(self, A, B, k: int, tol: float) -> EigenPairSet | None:
        path = self._path(self.key_for(A, B, k, tol))
        if not path.exists():
            return None
        header, pairs, A2, B2 = _unpack(path)
        if header["problem_hash"] != pencil_digest(A2, B2, k, tol):
            raise CacheError(f"{path}: stored pencil does not match its hash")
        return pairs

    def solve(self, A, B, k: int, tol: float = 1e-8, label: str = "", **kw) -> tuple[EigenPairSet, bool]:
        """Cached :func:`solve_generalized`; returns (pairs, hit)."""
        try:
            hit = self.get(A, B, k, tol)
        except CacheError:
            hit = None
        if hit is not None:
            return hit, True
        pairs = solve_generalized(A, B, k, tol, **kw)
        try:
            self.put(pairs, A, B, k, tol, label)
        except OSError:
            pass
        return pairs, False

    def entries(self) -> list[CacheEntry]:
        if not self.root.is_dir():
            return []
        out = []
        for p in sorted(self.root.glob("*.eig")):
            try:
                header, _ = read_header(p)
            except CacheError:
                header = {"problem_hash": p.stem, "corrupt": True}
            out.append(CacheEntry(p, header))
        return out

    def clear(self) -> int:
        n = 0
        for p in self.root.glob("*.eig") if self.root.is_dir() else []:
            p.unlink()
            n += 1
        q = self.root / "quarantine"
        if q.is_dir():
            shutil.rmtree(q)
        return n

    def verify(self) -> list[dict]:
        """Check every entry; corrupt or inconsistent files are moved to ``quarantine/``."""
        report = []
        for p in sorted(self.root.glob("*.eig")) if self.root.is_dir() else []:
            status, detail = "ok", ""
            try:
                header, pairs, A, B = _unpack(p)
                if header["problem_hash"] != pencil_digest(A, B, header["k"], header["tol"]):
                    raise CacheError("hash mismatch")
                if header["problem_hash"] != p.stem:
                    raise CacheError("file name does not match hash")
                res = float(pairs.head(1).residuals(A, B)[0])
                detail = f"residual={res:.3e}"
                if not res <= header["tol"]:
                    raise CacheError(f"residual {res:.3e} above tol")
            except (CacheError, KeyError, ValueError, OSError) as exc:
                status, detail = "quarantined", str(exc)
                q = self.root / "quarantine"
                q.mkdir(exist_ok=True)
                os.replace(p, q / p.name)
            report.append({"file": p.name, "status": status, "detail": detail})
        return report
