import json
import os
import sys
import tempfile
import unittest

import numpy as np

# Add parent directory to system path to allow imports from src folder
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.utils.errors import CountMismatch, IoError, ParseError
from src.utils.fem import SignalP0, SignalP1
from src.utils.file_io import (FShapeFile, format_csv, format_json, format_number, load_fshape,
                               parse_off, parse_ply, read_file, save_csv, save_fshape, write_file)
from src.utils.mesh import icosphere

TRIANGLE_OFF = """OFF
# unit triangle
3 1 0
0 0 0
1 0 0
0 1 0
3 0 1 2
#SIGNAL vertex 3
1.5
-2
0.25
"""


class TestReadWrite(unittest.TestCase):
    """
    The (success, payload) helpers never raise.
    """

    def test_round_trip(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "a.txt")
            ok, _ = write_file(path, "hello\n")
            self.assertTrue(ok)
            self.assertEqual(read_file(path), (True, "hello\n"))

    def test_failures_are_reported(self):
        ok, message = read_file(os.path.join(tempfile.gettempdir(), "missing_dir_fshape", "a.txt"))
        self.assertFalse(ok)
        self.assertTrue(message)
        ok, message = write_file(os.path.join(tempfile.gettempdir(), "missing_dir_fshape", "a.txt"), "x")
        self.assertFalse(ok)
        self.assertIn("missing_dir_fshape", message)

    def test_undecodable_file_is_reported(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "bad.off")
            with open(path, "wb") as f:
                f.write(b"OFF\n\xff\xfe\n")
            ok, message = read_file(path)
            self.assertFalse(ok)
            self.assertTrue(message)

    def test_format_number(self):
        self.assertEqual(format_number(3), "3")
        self.assertEqual(format_number(np.int64(4)), "4")
        self.assertEqual(format_number(True), "1")
        self.assertEqual(float(format_number(0.1)), 0.1)
        self.assertEqual(float(format_number(np.float64(1) / 3)), 1 / 3)
        self.assertEqual(format_number("converged"), "converged")


class TestOff(unittest.TestCase):
    """
    OFF files with an optional signal block.
    """

    def test_minimal_file(self):
        fshape = parse_off(TRIANGLE_OFF)
        self.assertEqual(fshape.mesh.n_vertices, 3)
        self.assertEqual(fshape.mesh.n_triangles, 1)
        self.assertEqual(fshape.element, "p1")
        np.testing.assert_array_equal(fshape.signal.values, [1.5, -2.0, 0.25])

    def test_counts_on_header_line(self):
        text = "OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"
        fshape = parse_off(text)
        self.assertEqual(fshape.element, "p1")
        np.testing.assert_array_equal(fshape.signal.values, np.zeros(3))

    def test_face_signal(self):
        text = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n#SIGNAL face 1\n7\n"
        fshape = parse_off(text)
        self.assertEqual(fshape.element, "p0")
        np.testing.assert_array_equal(fshape.signal.values, [7.0])

    def test_unreferenced_vertex_keeps_signal_alignment(self):
        text = "OFF\n4 1 0\n9 9 9\n0 0 0\n1 0 0\n0 1 0\n3 1 2 3\n#SIGNAL vertex 4\n100 1 2 3\n"
        fshape = parse_off(text)
        self.assertEqual(fshape.mesh.n_vertices, 3)
        np.testing.assert_array_equal(fshape.signal.values, [1.0, 2.0, 3.0])

    def test_truncated_file_names_the_line(self):
        text = "OFF\n3 1 0\n0 0 0\n1 0 0\n"
        with self.assertRaises(ParseError) as ctx:
            parse_off(text, "short.off")
        self.assertEqual(ctx.exception.line, 5)
        self.assertIn("short.off:5:", str(ctx.exception))

    def test_malformed_number(self):
        text = "OFF\n3 1 0\n0 0 0\n1 zero 0\n0 1 0\n3 0 1 2\n"
        with self.assertRaises(ParseError) as ctx:
            parse_off(text)
        self.assertEqual(ctx.exception.line, 4)

    def test_signal_count_mismatch(self):
        text = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n#SIGNAL vertex 2\n1\n2\n"
        with self.assertRaises(CountMismatch):
            parse_off(text)

    def test_other_problems(self):
        bad = {
            "missing header": "3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n",
            "quad": "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n",
            "trailing": TRIANGLE_OFF + "5\n",
            "short signal": "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n#SIGNAL vertex 3\n1 2\n",
            "bad signal header": "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n#SIGNAL edge 3\n1 2 3\n",
        }
        for name, text in bad.items():
            with self.subTest(name=name):
                with self.assertRaises(ParseError):
                    parse_off(text)


class TestPly(unittest.TestCase):
    """
    ASCII PLY with a signal property.
    """

    def test_face_signal_property(self):
        text = "\n".join([
            "ply", "format ascii 1.0", "comment made by hand",
            "element vertex 3", "property float x", "property float y", "property float z",
            "element face 1", "property list uchar int vertex_indices", "property double signal",
            "end_header", "0 0 0", "1 0 0", "0 1 0", "3 0 1 2 -4.5", "",
        ])
        fshape = parse_ply(text)
        self.assertEqual(fshape.element, "p0")
        np.testing.assert_array_equal(fshape.signal.values, [-4.5])

    def test_binary_rejected(self):
        with self.assertRaises(ParseError):
            parse_ply("ply\nformat binary_little_endian 1.0\nend_header\n")


class TestFShapeFiles(unittest.TestCase):
    """
    Saving and loading fshapes on disk.
    """

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        rng = np.random.default_rng(1)
        mesh = icosphere(1)
        self.p1 = FShapeFile(mesh, SignalP1(mesh, rng.normal(size=mesh.n_vertices)))
        self.p0 = FShapeFile(mesh, SignalP0(mesh, rng.normal(size=mesh.n_triangles)))

    def tearDown(self):
        self.tmp.cleanup()

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def test_save_and_load_preserve_values(self):
        for name, fshape in (("a.off", self.p1), ("b.ply", self.p1), ("c.off", self.p0), ("d.ply", self.p0)):
            with self.subTest(name=name):
                save_fshape(fshape, self.path(name))
                loaded = load_fshape(self.path(name))
                self.assertEqual(loaded.element, fshape.element)
                np.testing.assert_array_equal(loaded.mesh.vertices, fshape.mesh.vertices)
                np.testing.assert_array_equal(loaded.mesh.triangles, fshape.mesh.triangles)
                np.testing.assert_array_equal(loaded.signal.values, fshape.signal.values)

    def test_saving_twice_is_idempotent(self):
        save_fshape(self.p1, self.path("x.off"))
        first = read_file(self.path("x.off"))[1]
        save_fshape(load_fshape(self.path("x.off")), self.path("x.off"))
        self.assertEqual(read_file(self.path("x.off"))[1], first)

    def test_format_from_magic_word(self):
        with open(self.path("mesh.txt"), "w", encoding="utf-8") as f:
            f.write(TRIANGLE_OFF)
        self.assertEqual(load_fshape(self.path("mesh.txt")).mesh.n_triangles, 1)
        with open(self.path("notes.txt"), "w", encoding="utf-8") as f:
            f.write("hello\n")
        with self.assertRaises(IoError):
            load_fshape(self.path("notes.txt"))

    def test_unwritable_path(self):
        with self.assertRaises(IoError):
            save_fshape(self.p1, self.path(os.path.join("missing", "a.off")))

    def test_missing_file(self):
        with self.assertRaises(IoError):
            load_fshape(self.path("nothing.off"))


class TestReports(unittest.TestCase):
    """
    CSV tables and JSON reports.
    """

    def test_empty_table_is_header_only(self):
        self.assertEqual(format_csv(["h", "min_energy"], []), "h,min_energy\n")

    def test_csv_rows(self):
        text = format_csv(["iteration", "energy", "accepted"], [(0, 0.5, True), (1, 0.25, False)])
        self.assertEqual(text, "iteration,energy,accepted\n0,0.5,1\n1,0.25,0\n")

    def test_save_csv(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "t.csv")
            save_csv(path, ["a"], [])
            self.assertEqual(read_file(path), (True, "a\n"))
            with self.assertRaises(IoError):
                save_csv(os.path.join(tmp, "missing", "t.csv"), ["a"], [])

    def test_json_handles_numpy(self):
        data = json.loads(format_json({"b": np.float64(0.5), "a": np.arange(3), "ok": np.bool_(True)}))
        self.assertEqual(data, {"a": [0, 1, 2], "b": 0.5, "ok": True})


if __name__ == '__main__':
    unittest.main()
