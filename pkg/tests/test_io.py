import os
import struct

import numpy as np
import pytest

from specsketch import AllocationAudit, SketchedBlock
from specsketch import io as skio

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")


class TestDmat:
    def test_roundtrip_exact(self, tmp_path):
        mat = np.random.default_rng(0).standard_normal((100, 7))
        path = tmp_path / "m.dmat"
        skio.write_dense(mat, path, dt=2.0)
        src = skio.read_dense(path)
        assert (src.n_steps, src.n_particles, src.dt) == (100, 7, 2.0)
        assert np.array_equal(src.to_matrix(), mat)

    def test_file_size_formula(self, tmp_path):
        path = tmp_path / "m.dmat"
        skio.write_dense(np.ones((5, 3)), path)
        assert os.path.getsize(path) == 30 + 8 * 5 * 3

    def test_source_streams_with_bounded_buffer(self, tmp_path):
        mat = np.random.default_rng(1).standard_normal((20_000, 50))
        path = tmp_path / "big.dmat"
        skio.write_dense(mat, path)
        audit = AllocationAudit()
        src = skio.read_dense(path, audit=audit)
        total = 0.0
        for row in src.rows():
            total += row[0]
        assert audit.max_cells <= 2 * 50
        assert total == pytest.approx(mat[:, 0].sum())

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "m.dmat"
        skio.write_dense(np.ones((4, 4)), path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-10])
        with pytest.raises(skio.TruncatedPayloadError):
            skio.read_dense(path)

    def test_trailing_garbage(self, tmp_path):
        path = tmp_path / "m.dmat"
        skio.write_dense(np.ones((2, 2)), path)
        path.write_bytes(path.read_bytes() + b"xx")
        with pytest.raises(skio.MalformedHeaderError):
            skio.read_dense(path)

    def test_bad_magic_and_version(self, tmp_path):
        path = tmp_path / "m.dmat"
        skio.write_dense(np.ones((2, 2)), path)
        raw = bytearray(path.read_bytes())
        bad = tmp_path / "bad.dmat"
        bad.write_bytes(b"XMAT" + bytes(raw[4:]))
        with pytest.raises(skio.MalformedHeaderError):
            skio.read_dense(bad)
        raw[4] = 9  # version field
        bad.write_bytes(bytes(raw))
        with pytest.raises(skio.VersionMismatchError):
            skio.read_dense(bad)


class TestSkb:
    def make_block(self):
        data = np.random.default_rng(2).standard_normal((6, 3))
        return SketchedBlock(4, data, "fjlt", 10, 777, transform="wht",
                             dt=0.5)

    def test_roundtrip_bit_exact(self, tmp_path):
        block = self.make_block()
        path = tmp_path / "b.skb"
        skio.write_sketched(block, path)
        back = skio.read_sketched(path)
        assert back.data.tobytes() == block.data.tobytes()
        assert (back.block_index, back.kind, back.n_particles, back.seed,
                back.transform, back.dt) == \
            (4, block.kind, 10, 777, "wht", 0.5)

    def test_header_is_56_bytes(self, tmp_path):
        path = tmp_path / "b.skb"
        skio.write_sketched(self.make_block(), path)
        assert os.path.getsize(path) == 56 + 8 * 6 * 3

    def test_truncation_and_version(self, tmp_path):
        path = tmp_path / "b.skb"
        skio.write_sketched(self.make_block(), path)
        raw = path.read_bytes()
        short = tmp_path / "short.skb"
        short.write_bytes(raw[:-8])
        with pytest.raises(skio.TruncatedPayloadError):
            skio.read_sketched(short)
        bad = bytearray(raw)
        bad[4] = 3
        vpath = tmp_path / "v.skb"
        vpath.write_bytes(bytes(bad))
        with pytest.raises(skio.VersionMismatchError):
            skio.read_sketched(vpath)
        with pytest.raises(skio.MalformedHeaderError):
            mpath = tmp_path / "m.skb"
            mpath.write_bytes(b"SKB2" + raw[4:])
            skio.read_sketched(mpath)

    def test_m_exceeding_ambient_warns_but_reads(self, tmp_path):
        data = np.ones((2, 8))
        block = SketchedBlock(0, data, "gaussian", 3, 1)
        path = tmp_path / "wide.skb"
        skio.write_sketched(block, path)
        with pytest.warns(skio.SketchShapeWarning):
            back = skio.read_sketched(path)
        assert back.m == 8 and back.n_particles == 3


class TestGoldenFiles:
    """Committed byte fixtures pin the on-disk layout across platforms."""

    def test_dmat_golden_bytes_stable(self, tmp_path):
        golden = os.path.join(GOLDEN, "tiny.dmat")
        mat = np.array([[1.0, -2.5], [3.25, 4.0], [0.0, 1e-3]])
        fresh = tmp_path / "fresh.dmat"
        skio.write_dense(mat, fresh, dt=0.5)
        assert fresh.read_bytes() == open(golden, "rb").read()

    def test_dmat_golden_header_fields(self):
        raw = open(os.path.join(GOLDEN, "tiny.dmat"), "rb").read()
        magic, version, rows, cols, dt = struct.unpack("<4sHQQd", raw[:30])
        assert (magic, version, rows, cols, dt) == (b"DMAT", 1, 3, 2, 0.5)
        payload = np.frombuffer(raw[30:], dtype="<f8").reshape(3, 2)
        assert np.array_equal(
            payload, [[1.0, -2.5], [3.25, 4.0], [0.0, 1e-3]])

    def test_skb_golden_bytes_stable(self, tmp_path):
        golden = os.path.join(GOLDEN, "tiny.skb")
        block = SketchedBlock(2, np.arange(6, dtype=float).reshape(3, 2) / 7.0,
                              "haar", 5, 99, transform=None, dt=0.25)
        fresh = tmp_path / "fresh.skb"
        skio.write_sketched(block, fresh)
        assert fresh.read_bytes() == open(golden, "rb").read()

    def test_skb_golden_header_fields(self):
        raw = open(os.path.join(GOLDEN, "tiny.skb"), "rb").read()
        fields = struct.unpack("<4sHQQQQBBQd", raw[:56])
        assert fields == (b"SKB1", 1, 2, 3, 2, 5, 1, 0, 99, 0.25)


class TestCsv:
    def test_basic_parse(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("1,2\n3,4\n5,6\n")
        src = skio.read_dense(path)
        assert (src.n_steps, src.n_particles) == (3, 2)
        assert np.array_equal(src.to_matrix(), [[1, 2], [3, 4], [5, 6]])

    def test_write_read_roundtrip(self, tmp_path):
        mat = np.random.default_rng(3).standard_normal((4, 3))
        path = tmp_path / "r.csv"
        skio.write_csv(mat, path)
        assert np.array_equal(skio.read_dense(path).to_matrix(), mat)

    def test_ragged_rejected(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("1,2\n3\n")
        with pytest.raises(skio.FormatError):
            skio.read_dense(path)

    def test_non_numeric_rejected(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("1,2\n3,x\n")
        src = skio.read_dense(path)
        with pytest.raises(skio.FormatError):
            src.to_matrix()


class TestTables:
    def test_text_roundtrip_exact(self, tmp_path):
        a = np.random.default_rng(4).standard_normal(9)
        b = np.random.default_rng(5).standard_normal(9)
        path = tmp_path / "t.txt"
        skio.save_table(path, a, b, header="x y")
        xa, xb = skio.load_table(path)
        assert np.array_equal(xa, a) and np.array_equal(xb, b)

    def test_dmat_table(self, tmp_path):
        a = np.arange(5.0)
        b = np.arange(5.0) ** 2
        path = tmp_path / "t.dmat"
        skio.write_dense(np.column_stack([a, b]), path)
        xa, xb = skio.load_table(path)
        assert np.array_equal(xa, a) and np.array_equal(xb, b)


class TestBlockManifest:
    def test_roundtrip_relative_paths(self, tmp_path):
        d = tmp_path / "blocks"
        d.mkdir()
        paths = [d / f"b{i}.skb" for i in range(3)]
        for p in paths:
            p.write_bytes(b"")
        manifest = d / "blocks.txt"
        skio.write_block_manifest([str(p) for p in paths], manifest)
        listed = skio.read_block_manifest(manifest)
        assert [os.path.basename(p) for p in listed] == \
            ["b0.skb", "b1.skb", "b2.skb"]
        assert all(os.path.isabs(p) for p in listed)
        text = manifest.read_text()
        assert "b1.skb" in text and os.sep not in text.split()[0]


LAMMPS_FIXTURE = """ITEM: TIMESTEP
0
ITEM: NUMBER OF ATOMS
3
ITEM: BOX BOUNDS pp pp pp
0 10
0 10
0 10
ITEM: ATOMS id type vx vy vz
1 1 1.0 0.5 0.0
2 1 2.0 0.5 0.0
3 1 3.0 0.5 0.0
ITEM: TIMESTEP
100
ITEM: NUMBER OF ATOMS
3
ITEM: BOX BOUNDS pp pp pp
0 10
0 10
0 10
ITEM: ATOMS id type vx vy vz
2 1 5.0 0.1 0.2
1 1 4.0 0.1 0.2
3 1 6.0 0.1 0.2
"""


class TestLammpsDump:
    def test_rows_ordered_by_id(self, tmp_path):
        path = tmp_path / "dump.txt"
        path.write_text(LAMMPS_FIXTURE)
        src = skio.parse_lammps_dump(path, "vx")
        assert (src.n_steps, src.n_particles) == (2, 3)
        mat = src.to_matrix()
        # frame 2 arrives with shuffled ids and must come back sorted
        assert np.array_equal(mat, [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])

    def test_named_reducer(self, tmp_path):
        path = tmp_path / "dump.txt"
        path.write_text(LAMMPS_FIXTURE)
        mat = skio.parse_lammps_dump(path, "vmag").to_matrix()
        assert mat[0, 0] == pytest.approx(np.sqrt(1.0 + 0.25))
        assert mat[1, 2] == pytest.approx(np.sqrt(36 + 0.01 + 0.04))

    def test_missing_field_names_columns(self, tmp_path):
        path = tmp_path / "dump.txt"
        path.write_text(LAMMPS_FIXTURE)
        with pytest.raises(skio.FormatError, match="vy"):
            skio.parse_lammps_dump(path, "vq")

    def test_varying_atom_count_rejected(self, tmp_path):
        broken = LAMMPS_FIXTURE.replace(
            "ITEM: NUMBER OF ATOMS\n3\nITEM: BOX BOUNDS pp pp pp\n0 10\n0 10\n"
            "0 10\nITEM: ATOMS id type vx vy vz\n2 1 5.0",
            "ITEM: NUMBER OF ATOMS\n2\nITEM: BOX BOUNDS pp pp pp\n0 10\n0 10\n"
            "0 10\nITEM: ATOMS id type vx vy vz\n2 1 5.0")
        broken = broken.replace("3 1 6.0 0.1 0.2\n", "", 1)
        path = tmp_path / "dump.txt"
        path.write_text(broken)
        with pytest.raises(skio.FormatError, match="atom count"):
            skio.parse_lammps_dump(path, "vx")

    def test_streaming_source_reiterable(self, tmp_path):
        path = tmp_path / "dump.txt"
        path.write_text(LAMMPS_FIXTURE)
        src = skio.parse_lammps_dump(path, "vx")
        assert np.array_equal(src.to_matrix(), src.to_matrix())
