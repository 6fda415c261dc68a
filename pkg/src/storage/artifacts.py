"""Binary and CSV artifacts exchanged between pipeline commands.

File layout (little-endian):

    b"CROM" | u16 version | u8 role | u8 reserved
    u32 metadata length | metadata (UTF-8 JSON)
    u16 block count
    per block: u16 name length | name | u64 rows | u64 cols | rows*cols f8, row-major

Scalars and labels live in the metadata; every array is a named block.
Files are written to a temporary sibling and renamed into place.
"""

from enum import Enum
import json
import logging
import os
from pathlib import Path
import struct
from typing import Any, NamedTuple

import numpy as np

from src.errors import ArtifactIOError
from src.models.causal import CausationMatrix, ModelStructure, ThresholdRecord
from src.models.kse import SpatioTemporalField
from src.models.modal import Basis, BasisKind, CoefficientSeries
from src.models.quadratic import ModelProvenance, QuadraticModel

logger = logging.getLogger(__name__)

MAGIC = b"CROM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHBB")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_SHAPE = struct.Struct("<QQ")


class ArtifactRole(str, Enum):
    """What an artifact file holds."""

    FIELD = "field"
    SERIES = "series"
    MODEL = "model"
    MATRIX = "matrix"
    BASIS = "basis"
    STRUCTURE = "structure"

    def __str__(self) -> str:
        return self.value


ROLE_CODES = {
    ArtifactRole.FIELD: 1,
    ArtifactRole.SERIES: 2,
    ArtifactRole.MODEL: 3,
    ArtifactRole.MATRIX: 4,
    ArtifactRole.BASIS: 5,
    ArtifactRole.STRUCTURE: 6,
}
_ROLES_BY_CODE = {code: role for role, code in ROLE_CODES.items()}


class Artifact(NamedTuple):
    role: ArtifactRole
    metadata: dict[str, Any]
    blocks: dict[str, np.ndarray]


def _atomic_write(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except OSError as e:
        raise ArtifactIOError(f"Cannot write {path}: {e}") from e


def write_artifact(
    path: str | Path,
    role: ArtifactRole,
    metadata: dict[str, Any],
    blocks: dict[str, np.ndarray],
) -> Path:
    """Serialize named float blocks plus JSON metadata."""
    path = Path(path)
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, ROLE_CODES[role], 0)]
    meta = json.dumps(metadata, sort_keys=True).encode("utf-8")
    parts += [_U32.pack(len(meta)), meta, _U16.pack(len(blocks))]
    for name, block in blocks.items():
        array = np.asarray(block, dtype="<f8")
        if array.ndim == 1:
            array = array.reshape(-1, 1)
        if array.ndim != 2:
            raise ArtifactIOError(f"Block {name} must be 1-D or 2-D, got {array.ndim}-D")
        encoded = name.encode("utf-8")
        parts += [
            _U16.pack(len(encoded)),
            encoded,
            _SHAPE.pack(*array.shape),
            np.ascontiguousarray(array).tobytes(),
        ]
    _atomic_write(path, b"".join(parts))
    logger.debug(f"Wrote {role} artifact {path}")
    return path


class _Reader:
    def __init__(self, data: bytes, path: Path) -> None:
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise ArtifactIOError(f"Truncated artifact {self.path}")
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, layout: struct.Struct) -> tuple:
        return layout.unpack(self.take(layout.size))


def read_artifact(path: str | Path, expected: ArtifactRole | None = None) -> Artifact:
    """Read an artifact file.

    Raises:
        ArtifactIOError: if the file is missing, malformed, of an unknown
            version or of a role other than expected
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise ArtifactIOError(f"Cannot read {path}: {e}") from e

    reader = _Reader(data, path)
    magic, version, code, _ = reader.unpack(_HEADER)
    if magic != MAGIC:
        raise ArtifactIOError(f"{path} is not a CROM artifact")
    if version != FORMAT_VERSION:
        raise ArtifactIOError(f"{path} has unsupported format version {version}")
    if code not in _ROLES_BY_CODE:
        raise ArtifactIOError(f"{path} has unknown role tag {code}")
    role = _ROLES_BY_CODE[code]
    if expected is not None and role != expected:
        raise ArtifactIOError(f"{path} holds a {role}, expected a {expected}")

    (meta_length,) = reader.unpack(_U32)
    try:
        metadata = json.loads(reader.take(meta_length).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ArtifactIOError(f"Corrupt metadata in {path}: {e}") from e

    (count,) = reader.unpack(_U16)
    blocks: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_length,) = reader.unpack(_U16)
        name = reader.take(name_length).decode("utf-8")
        rows, cols = reader.unpack(_SHAPE)
        raw = reader.take(8 * rows * cols)
        blocks[name] = np.frombuffer(raw, dtype="<f8").reshape(rows, cols).astype(float)
    if reader.offset != len(data):
        raise ArtifactIOError(f"Trailing bytes in {path}")
    return Artifact(role, metadata, blocks)


def _block(artifact: Artifact, name: str) -> np.ndarray:
    if name not in artifact.blocks:
        raise ArtifactIOError(f"{artifact.role} artifact lacks block '{name}'")
    return artifact.blocks[name]


def _vector(artifact: Artifact, name: str) -> np.ndarray:
    return _block(artifact, name).ravel()


def save_field(path: str | Path, field: SpatioTemporalField) -> Path:
    return write_artifact(
        path,
        ArtifactRole.FIELD,
        {"L": field.L},
        {"grid": field.grid, "times": field.times, "values": field.values},
    )


def load_field(path: str | Path) -> SpatioTemporalField:
    artifact = read_artifact(path, ArtifactRole.FIELD)
    return SpatioTemporalField(
        grid=_vector(artifact, "grid"),
        times=_vector(artifact, "times"),
        values=_block(artifact, "values"),
        L=artifact.metadata["L"],
    )


def save_series(path: str | Path, series: CoefficientSeries) -> Path:
    return write_artifact(
        path,
        ArtifactRole.SERIES,
        {"basis_id": series.basis_id, "labels": series.labels},
        {"times": series.times, "values": series.values},
    )


def load_series(path: str | Path) -> CoefficientSeries:
    artifact = read_artifact(path, ArtifactRole.SERIES)
    return CoefficientSeries(
        times=_vector(artifact, "times"),
        values=_block(artifact, "values"),
        basis_id=artifact.metadata.get("basis_id", "unspecified"),
        labels=artifact.metadata.get("labels"),
    )


def save_model(path: str | Path, model: QuadraticModel) -> Path:
    """Linear, constant and noise blocks plus (i, j, k, coef) quadratic records."""
    records = np.column_stack([model.quad_terms.astype(float), model.quad_coefs])
    return write_artifact(
        path,
        ArtifactRole.MODEL,
        {"provenance": model.provenance.value, "basis_id": model.basis_id, "n": model.n},
        {
            "linear": model.linear,
            "constant": model.constant,
            "noise": model.noise,
            "quadratic": records.reshape(-1, 4),
        },
    )


def load_model(path: str | Path) -> QuadraticModel:
    artifact = read_artifact(path, ArtifactRole.MODEL)
    records = _block(artifact, "quadratic").reshape(-1, 4)
    n = int(artifact.metadata["n"])
    return QuadraticModel(
        linear=_block(artifact, "linear").reshape(n, n),
        quad_terms=records[:, :3].astype(np.int64),
        quad_coefs=records[:, 3],
        constant=_vector(artifact, "constant"),
        noise=_block(artifact, "noise"),
        provenance=ModelProvenance(artifact.metadata["provenance"]),
        basis_id=artifact.metadata.get("basis_id", "unspecified"),
    )


def save_causation_matrix(path: str | Path, cem: CausationMatrix, labels: list[str]) -> Path:
    return write_artifact(
        path,
        ArtifactRole.MATRIX,
        {"base": cem.base, "min_raw_value": cem.min_raw_value, "labels": labels},
        {"values": cem.values},
    )


def load_causation_matrix(path: str | Path) -> CausationMatrix:
    artifact = read_artifact(path, ArtifactRole.MATRIX)
    return CausationMatrix(
        values=_block(artifact, "values"),
        base=artifact.metadata.get("base", 2),
        min_raw_value=artifact.metadata.get("min_raw_value", 0.0),
    )


def save_basis(path: str | Path, basis: Basis) -> Path:
    blocks = {"real": basis.coefficients.real, "imag": basis.coefficients.imag}
    if basis.eigenvalues is not None:
        blocks["eigenvalues"] = basis.eigenvalues
    if basis.covariance_eigenvalues is not None:
        blocks["covariance_eigenvalues"] = basis.covariance_eigenvalues
    metadata = {
        "kind": basis.kind.value,
        "L": basis.L,
        "labels": [list(label) for label in basis.labels] if basis.labels is not None else None,
    }
    return write_artifact(path, ArtifactRole.BASIS, metadata, blocks)


def load_basis(path: str | Path) -> Basis:
    artifact = read_artifact(path, ArtifactRole.BASIS)
    labels = artifact.metadata.get("labels")
    return Basis(
        kind=BasisKind(artifact.metadata["kind"]),
        L=artifact.metadata["L"],
        coefficients=_block(artifact, "real") + 1j * _block(artifact, "imag"),
        labels=[tuple(label) for label in labels] if labels is not None else None,
        eigenvalues=artifact.blocks["eigenvalues"].ravel() if "eigenvalues" in artifact.blocks else None,
        covariance_eigenvalues=(
            artifact.blocks["covariance_eigenvalues"].ravel()
            if "covariance_eigenvalues" in artifact.blocks
            else None
        ),
    )


def save_structure(path: str | Path, structure: ModelStructure) -> Path:
    return write_artifact(
        path,
        ArtifactRole.STRUCTURE,
        {"threshold_record": structure.threshold_record.model_dump(mode="json")},
        {"mask": structure.mask.astype(float)},
    )


def load_structure(path: str | Path) -> ModelStructure:
    artifact = read_artifact(path, ArtifactRole.STRUCTURE)
    return ModelStructure(
        mask=_block(artifact, "mask") != 0.0,
        threshold_record=ThresholdRecord.model_validate(artifact.metadata["threshold_record"]),
    )


def write_csv(
    path: str | Path,
    matrix: np.ndarray,
    header: list[str] | None = None,
    row_labels: list[str] | None = None,
) -> Path:
    """Write a matrix as CSV with round-trip float precision."""
    path = Path(path)
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    columns = list(header) if header is not None else []
    try:
        with open(tmp, "w") as handle:
            if row_labels is None:
                np.savetxt(handle, matrix, delimiter=",", fmt="%.17g", header=",".join(columns), comments="")
            else:
                if columns:
                    handle.write(",".join(["", *columns]) + "\n")
                for label, row in zip(row_labels, matrix):
                    handle.write(label + "," + ",".join(f"{v:.17g}" for v in row) + "\n")
        os.replace(tmp, path)
    except OSError as e:
        raise ArtifactIOError(f"Cannot write {path}: {e}") from e
    return path


def read_csv(path: str | Path) -> np.ndarray:
    """Read a CSV written by write_csv without row labels."""
    try:
        return np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2))
    except (OSError, ValueError) as e:
        raise ArtifactIOError(f"Cannot read CSV {path}: {e}") from e


def csv_mirror(path: str | Path) -> Path:
    """Write the CSV mirror of a binary artifact next to it.

    Fields and series get a time column followed by one column per
    component; the other roles mirror their main block.
    """
    path = Path(path)
    artifact = read_artifact(path)
    target = path.with_suffix(".csv")
    role = artifact.role
    if role in (ArtifactRole.FIELD, ArtifactRole.SERIES):
        values = _block(artifact, "values")
        times = _vector(artifact, "times")
        labels = artifact.metadata.get("labels") or [f"c{k + 1}" for k in range(values.shape[0])]
        return write_csv(target, np.column_stack([times, values.T]), ["t", *labels])
    if role == ArtifactRole.MODEL:
        return write_csv(target, _block(artifact, "quadratic"), ["i", "j", "k", "coef"])
    if role == ArtifactRole.MATRIX:
        return write_csv(target, _block(artifact, "values"), artifact.metadata.get("labels"))
    if role == ArtifactRole.STRUCTURE:
        return write_csv(target, _block(artifact, "mask"))
    return write_csv(target, _block(artifact, "real"))
