"""
Disk access for fshape files, run tables and reports.

read_file / write_file return (success, payload or error message) tuples so
config loading can attach its own context; the fshape, CSV and JSON helpers
built on them raise IoError / ParseError / CountMismatch naming the path and
line.

Formats:
    OFF + signal block:   standard OFF, then `#SIGNAL vertex|face N` and N values
    ASCII PLY:            `property double signal` on the vertex or face element
    CSV:                  header row, numbers with 17 significant digits
    JSON:                 reports
"""
import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, is_dataclass
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import CountMismatch, IoError, ParseError
from .fem import Signal, SignalP0, SignalP1
from .mesh import TriangleMesh

logger = logging.getLogger(__name__)


def read_file(path: str) -> Tuple[bool, str]:
    """(True, UTF-8 text) or (False, reason) for a missing or undecodable file."""
    try:
        return True, Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        return False, str(e)


def write_file(path: str, data: str) -> Tuple[bool, str]:
    """Write UTF-8 text with '\\n' endings; (True, path written) or (False, reason)."""
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as file:
            file.write(data)
        return True, f"written {path}"
    except OSError as e:
        return False, str(e)


def format_number(x: Any) -> str:
    """Integers as-is, floats with 17 significant digits (exact round-trip)."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def _write_or_raise(path: str, data: str) -> None:
    ok, message = write_file(path, data)
    if not ok:
        raise IoError(f"cannot write '{path}': {message}")


def _read_or_raise(path: str) -> str:
    ok, content = read_file(path)
    if not ok:
        raise IoError(f"cannot read '{path}': {content}")
    return content


# ===================================================================
# SECTION 1: FSHAPE FILES
# ===================================================================

@dataclass
class FShapeFile:
    """A mesh with a P0 or P1 signal."""
    mesh: TriangleMesh
    signal: Signal

    @property
    def element(self) -> str:
        return self.signal.element


class _Lines:
    """Cursor over meaningful lines (1-based numbers kept for error messages)."""

    def __init__(self, text: str, path: str, comment: Optional[str] = None) -> None:
        self.path = path
        self.rows: List[Tuple[int, str]] = []
        for number, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line:
                continue
            if comment and line.startswith(comment) and not line.upper().startswith("#SIGNAL"):
                continue
            self.rows.append((number, line))
        self.pos = 0
        self.last_line = len(text.splitlines())

    def next(self, what: str) -> Tuple[int, List[str]]:
        if self.pos >= len(self.rows):
            raise ParseError(f"unexpected end of file while reading {what}", self.last_line + 1, self.path)
        number, line = self.rows[self.pos]
        self.pos += 1
        return number, line.split()

    def done(self) -> bool:
        return self.pos >= len(self.rows)


def _floats(fields: Sequence[str], count: int, number: int, path: str, what: str) -> List[float]:
    if len(fields) < count:
        raise ParseError(f"{what}: expected {count} numbers, got {len(fields)}", number, path)
    try:
        values = [float(x) for x in fields[:count]]
    except ValueError:
        raise ParseError(f"{what}: malformed number", number, path) from None
    if not all(np.isfinite(values)):
        raise ParseError(f"{what}: non-finite value", number, path)
    return values


def _ints(fields: Sequence[str], number: int, path: str, what: str) -> List[int]:
    try:
        return [int(x) for x in fields]
    except ValueError:
        raise ParseError(f"{what}: malformed integer", number, path) from None


def _triangle(fields: Sequence[str], number: int, path: str) -> List[int]:
    counts = _ints(fields[:1], number, path, "face")
    if counts[0] != 3:
        raise ParseError(f"only triangles are supported, got a {counts[0]}-gon", number, path)
    if len(fields) < 4:
        raise ParseError("face: expected 3 vertex indices", number, path)
    return _ints(fields[1:4], number, path, "face")


def _make_fshape(vertices, faces, element: Optional[str], values: Optional[List[float]], path: str) -> FShapeFile:
    mesh = TriangleMesh(vertices, faces)
    if element is None:
        return FShapeFile(mesh, SignalP1(mesh, np.zeros(mesh.n_vertices)))
    if element == "vertex":
        if len(values) != len(vertices):
            raise CountMismatch(f"{path}: vertex signal has {len(values)} values for {len(vertices)} vertices")
        return FShapeFile(mesh, SignalP1(mesh, np.asarray(values)[mesh.vertex_origin]))
    if len(values) != len(faces):
        raise CountMismatch(f"{path}: face signal has {len(values)} values for {len(faces)} faces")
    return FShapeFile(mesh, SignalP0(mesh, values))


def parse_off(text: str, path: str = "<off>") -> FShapeFile:
    """Parse OFF text with an optional `#SIGNAL vertex|face N` block."""
    lines = _Lines(text, path, comment="#")
    number, header = lines.next("header")
    if header[0].upper() != "OFF":
        raise ParseError("missing OFF header", number, path)
    counts = header[1:]
    if not counts:
        number, counts = lines.next("counts")
    if len(counts) < 2:
        raise ParseError("expected vertex and face counts", number, path)
    nv, nf = _ints(counts[:2], number, path, "counts")
    if nv < 0 or nf < 0:
        raise ParseError("negative vertex or face count", number, path)

    vertices = []
    for _ in range(nv):
        number, fields = lines.next("vertex")
        vertices.append(_floats(fields, 3, number, path, "vertex"))
    faces = []
    for _ in range(nf):
        number, fields = lines.next("face")
        faces.append(_triangle(fields, number, path))

    element, values = None, None
    if not lines.done():
        number, fields = lines.next("signal header")
        if fields[0].upper() != "#SIGNAL" or len(fields) != 3 or fields[1].lower() not in ("vertex", "face"):
            raise ParseError("expected '#SIGNAL vertex|face N'", number, path)
        element = fields[1].lower()
        n = _ints(fields[2:3], number, path, "signal count")[0]
        expected = nv if element == "vertex" else nf
        if n != expected:
            raise CountMismatch(f"{path}:{number}: {element} signal count {n} does not match {expected}")
        values = []
        while len(values) < n:
            number, fields = lines.next("signal values")
            values.extend(_floats(fields, len(fields), number, path, "signal"))
        if len(values) != n:
            raise ParseError(f"signal block has {len(values)} values, header says {n}", number, path)
        if not lines.done():
            number, _ = lines.next("end")
            raise ParseError("unexpected content after signal block", number, path)
    return _make_fshape(vertices, faces, element, values, path)


def format_off(fshape: FShapeFile) -> str:
    mesh = fshape.mesh
    out = io.StringIO()
    out.write("OFF\n")
    out.write(f"{mesh.n_vertices} {mesh.n_triangles} 0\n")
    for p in mesh.vertices:
        out.write(" ".join(format_number(x) for x in p) + "\n")
    for tri in mesh.triangles:
        out.write("3 " + " ".join(str(int(i)) for i in tri) + "\n")
    kind = "vertex" if fshape.element == "p1" else "face"
    out.write(f"#SIGNAL {kind} {len(fshape.signal.values)}\n")
    for value in fshape.signal.values:
        out.write(format_number(value) + "\n")
    return out.getvalue()


def parse_ply(text: str, path: str = "<ply>") -> FShapeFile:
    """Parse ASCII PLY; a float/double `signal` property on vertex or face is the signal."""
    lines = _Lines(text, path)
    number, fields = lines.next("header")
    if fields != ["ply"]:
        raise ParseError("missing 'ply' magic", number, path)
    elements: List[Tuple[str, int, List[Tuple[str, bool]]]] = []
    while True:
        number, fields = lines.next("header")
        key = fields[0]
        if key == "end_header":
            break
        if key == "format":
            if len(fields) < 2 or fields[1] != "ascii":
                raise ParseError("only ASCII PLY is supported", number, path)
        elif key in ("comment", "obj_info"):
            continue
        elif key == "element":
            if len(fields) != 3:
                raise ParseError("malformed element line", number, path)
            elements.append((fields[1], _ints(fields[2:3], number, path, "element count")[0], []))
        elif key == "property":
            if not elements:
                raise ParseError("property before any element", number, path)
            is_list = len(fields) >= 2 and fields[1] == "list"
            elements[-1][2].append((fields[-1], is_list))
        else:
            raise ParseError(f"unknown header keyword '{key}'", number, path)

    vertices, faces = [], []
    vertex_signal, face_signal = [], []
    for name, count, props in elements:
        names = [p for p, _ in props]
        for _ in range(count):
            number, row = lines.next(f"{name} data")
            if name == "vertex":
                values = _floats(row, len(names), number, path, "vertex")
                record = dict(zip(names, values))
                if not {"x", "y", "z"} <= record.keys():
                    raise ParseError("vertex element needs x, y, z", number, path)
                vertices.append([record["x"], record["y"], record["z"]])
                if "signal" in record:
                    vertex_signal.append(record["signal"])
            elif name == "face":
                pos = 0
                for prop, is_list in props:
                    if is_list:
                        tri = _triangle(row[pos:], number, path)
                        faces.append(tri)
                        pos += 4
                    else:
                        value = _floats(row[pos:], 1, number, path, f"face {prop}")[0]
                        if prop == "signal":
                            face_signal.append(value)
                        pos += 1
            # other elements are skipped

    has_vertex = any(p == "signal" for n, _, ps in elements if n == "vertex" for p, _ in ps)
    has_face = any(p == "signal" for n, _, ps in elements if n == "face" for p, _ in ps)
    if has_vertex:
        return _make_fshape(vertices, faces, "vertex", vertex_signal, path)
    if has_face:
        return _make_fshape(vertices, faces, "face", face_signal, path)
    return _make_fshape(vertices, faces, None, None, path)


def format_ply(fshape: FShapeFile) -> str:
    mesh = fshape.mesh
    on_vertex = fshape.element == "p1"
    out = io.StringIO()
    out.write("ply\nformat ascii 1.0\n")
    out.write(f"element vertex {mesh.n_vertices}\n")
    out.write("property double x\nproperty double y\nproperty double z\n")
    if on_vertex:
        out.write("property double signal\n")
    out.write(f"element face {mesh.n_triangles}\n")
    out.write("property list uchar int vertex_indices\n")
    if not on_vertex:
        out.write("property double signal\n")
    out.write("end_header\n")
    values = fshape.signal.values
    for i, p in enumerate(mesh.vertices):
        row = [format_number(x) for x in p]
        if on_vertex:
            row.append(format_number(values[i]))
        out.write(" ".join(row) + "\n")
    for k, tri in enumerate(mesh.triangles):
        row = ["3"] + [str(int(i)) for i in tri]
        if not on_vertex:
            row.append(format_number(values[k]))
        out.write(" ".join(row) + "\n")
    return out.getvalue()


def _format_of(path: str, text: Optional[str] = None) -> str:
    suffix = Path(path).suffix.lower()
    if suffix in (".off", ".ply"):
        return suffix[1:]
    if text is not None:
        head = text.lstrip()[:3].lower()
        if head == "ply":
            return "ply"
        if head == "off":
            return "off"
    raise IoError(f"cannot tell the format of '{path}' (expected .off or .ply)")


def load_fshape(path: str) -> FShapeFile:
    """Load an OFF or PLY fshape; the format follows the extension, else the magic word."""
    text = _read_or_raise(path)
    kind = _format_of(path, text)
    fshape = parse_off(text, path) if kind == "off" else parse_ply(text, path)
    logger.debug("loaded %s: %d vertices, %d triangles, %s signal",
                 path, fshape.mesh.n_vertices, fshape.mesh.n_triangles, fshape.element)
    return fshape


def save_fshape(fshape: FShapeFile, path: str) -> None:
    """Write an fshape as OFF or PLY (by extension, OFF otherwise)."""
    kind = Path(path).suffix.lower()
    _write_or_raise(path, format_ply(fshape) if kind == ".ply" else format_off(fshape))


# ===================================================================
# SECTION 2: TABLES AND REPORTS
# ===================================================================

def format_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_number(x) for x in row])
    return out.getvalue()


def save_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """Write a CSV table with a header row; an empty table is header-only."""
    _write_or_raise(path, format_csv(header, rows))


def to_jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def format_json(data: Any) -> str:
    """Dataclasses, numpy scalars and arrays become plain JSON; keys sorted."""
    if is_dataclass(data) and not isinstance(data, type):
        data = asdict(data)
    return json.dumps(to_jsonable(data), indent=2, sort_keys=True) + "\n"


def save_json(path: str, data: Any) -> None:
    _write_or_raise(path, format_json(data))
