import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fs2net.errors import DatasetError
from fs2net.fibers import (
    CoarseLabel,
    Fiber,
    FiberDataset,
    FineLabel,
    IDENTITY_ROTATION,
    RotationSpec,
    WHITE_LABELS,
    center_fiber,
    load_dataset,
    parse_rotation_tag,
    rotate_fiber,
    rotation_about_axis,
    save_dataset,
    split_dataset,
    to_coarse,
)


def random_rotation(rng):
    # QR of a random Gaussian matrix, sign-fixed to det +1
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return RotationSpec(q)


def random_fiber(rng, n=None, fid="f", label=None):
    n = n if n is not None else int(rng.integers(2, 40))
    return Fiber(fid, rng.normal(0.0, 5.0, (n, 3)), label)


class TestLabels:
    def test_eight_white_labels(self):
        assert len(WHITE_LABELS) == 8
        assert FineLabel.GREY not in WHITE_LABELS

    def test_coarse_mapping_total(self):
        assert to_coarse(FineLabel.GREY) is CoarseLabel.GREY
        for lab in WHITE_LABELS:
            assert to_coarse(lab) is CoarseLabel.WHITE


class TestFiber:
    def test_requires_two_points(self):
        with pytest.raises(ValueError):
            Fiber("f1", np.zeros((1, 3)))

    def test_rejects_non_finite(self):
        pts = np.zeros((3, 3))
        pts[1, 2] = np.nan
        with pytest.raises(ValueError):
            Fiber("f1", pts)

    def test_points_read_only(self):
        f = Fiber("f1", np.zeros((2, 3)))
        with pytest.raises(ValueError):
            f.points[0, 0] = 1.0


class TestDatasetIO:
    def test_single_record(self, tmp_path):
        path = tmp_path / "one.fib"
        path.write_text("f1\tGrey\t0,0,0;1,0,0\n")
        ds = load_dataset(path)
        assert len(ds) == 1
        assert ds.fibers[0].label is FineLabel.GREY
        assert len(ds.fibers[0]) == 2

    def test_unlabeled_record(self, tmp_path):
        path = tmp_path / "q.fib"
        path.write_text("f1\t?\t0,0,0;1,1,1\n")
        assert load_dataset(path).fibers[0].label is None

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "dup.fib"
        path.write_text("f1\tGrey\t0,0,0;1,0,0\nf1\tGrey\t0,0,0;2,0,0\n")
        with pytest.raises(DatasetError, match="duplicate"):
            load_dataset(path)

    def test_malformed_line_names_line_number(self, tmp_path):
        path = tmp_path / "bad.fib"
        path.write_text("# comment\nf1\tGrey\t0,0,0;1,0,0\nbroken line\n")
        with pytest.raises(DatasetError, match="line 3"):
            load_dataset(path)

    def test_non_finite_coordinate_rejected(self, tmp_path):
        path = tmp_path / "inf.fib"
        path.write_text("f1\tGrey\t0,0,0;inf,0,0\n")
        with pytest.raises(DatasetError, match="line 1"):
            load_dataset(path)

    def test_unknown_label_rejected(self, tmp_path):
        path = tmp_path / "lab.fib"
        path.write_text("f1\tMagenta\t0,0,0;1,0,0\n")
        with pytest.raises(DatasetError, match="Magenta"):
            load_dataset(path)

    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(7)
        fibers = [
            random_fiber(rng, fid=f"f{i}", label=rng.choice([None] + list(FineLabel)))
            for i in range(20)
        ]
        fibers.append(Fiber("tenth", np.array([[0.1, 0.2, 0.3], [1.0, 2.0, 3.0]])))
        ds = FiberDataset(tuple(fibers), provenance="round trip test")
        path = tmp_path / "rt.fib"
        save_dataset(ds, path)
        back = load_dataset(path)
        assert back.provenance == ds.provenance
        assert len(back) == len(ds)
        for a, b in zip(ds.fibers, back.fibers):
            assert a.id == b.id and a.label is b.label
            assert np.array_equal(a.points, b.points)

    def test_save_twice_identical_bytes(self, tmp_path):
        rng = np.random.default_rng(3)
        ds = FiberDataset(tuple(random_fiber(rng, fid=f"f{i}") for i in range(5)))
        p1, p2 = tmp_path / "a.fib", tmp_path / "b.fib"
        save_dataset(ds, p1)
        save_dataset(ds, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_empty_dataset_header_only(self, tmp_path):
        path = tmp_path / "empty.fib"
        save_dataset(FiberDataset((), provenance=""), path)
        lines = path.read_text().splitlines()
        assert lines and all(ln.startswith("#") for ln in lines)
        assert len(load_dataset(path)) == 0


class TestRotation:
    def test_identity(self):
        f = Fiber("f", np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
        g = rotate_fiber(f, IDENTITY_ROTATION)
        assert np.array_equal(f.points, g.points)

    def test_quarter_turn_about_z(self):
        f = Fiber("f", np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]))
        g = rotate_fiber(f, rotation_about_axis("z", 90.0))
        np.testing.assert_allclose(g.points[0], [0.0, 1.0, 0.0], atol=1e-12)

    def test_non_orthonormal_rejected(self):
        with pytest.raises(ValueError, match="orthonormal"):
            RotationSpec(np.eye(3) * 2.0)

    def test_reflection_rejected(self):
        with pytest.raises(ValueError, match="determinant"):
            RotationSpec(np.diag([1.0, 1.0, -1.0]))

    def test_pairwise_distances_preserved(self):
        # brute-force both distance matrices
        rng = np.random.default_rng(5)
        f = random_fiber(rng, n=25)
        g = rotate_fiber(f, random_rotation(rng))

        def dists(pts):
            n = len(pts)
            return np.array([
                np.linalg.norm(pts[i] - pts[j]) for i in range(n) for j in range(n)
            ])

        da, db = dists(f.points), dists(g.points)
        np.testing.assert_allclose(db, da, rtol=1e-9, atol=1e-12)

    def test_inverse_round_trip(self):
        rng = np.random.default_rng(6)
        f = random_fiber(rng, n=30)
        r = random_rotation(rng)
        back = rotate_fiber(rotate_fiber(f, r), RotationSpec(r.matrix.T))
        np.testing.assert_allclose(back.points, f.points, atol=1e-9)

    def test_label_and_id_preserved(self):
        f = Fiber("name", np.zeros((2, 3)) + 1.0, FineLabel.FORNIX)
        g = rotate_fiber(f, rotation_about_axis("x", 10))
        assert g.id == "name" and g.label is FineLabel.FORNIX

    def test_parse_rotation_tag(self):
        r = parse_rotation_tag("z:30")
        assert r.tag == "z:30"
        np.testing.assert_allclose(
            r.matrix, rotation_about_axis("z", 30).matrix, atol=0
        )
        assert parse_rotation_tag("id") is IDENTITY_ROTATION
        with pytest.raises(ValueError):
            parse_rotation_tag("w:30")


class TestCentering:
    def test_already_centered_unchanged(self):
        f = Fiber("f", np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]))
        np.testing.assert_allclose(center_fiber(f).points, f.points, atol=1e-15)

    def test_mean_subtraction(self):
        f = Fiber("f", np.array([[2.0, 2.0, 2.0], [4.0, 4.0, 4.0]]))
        np.testing.assert_allclose(
            center_fiber(f).points, [[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]], atol=0
        )

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=30, deadline=None)
    def test_centroid_at_origin(self, seed):
        rng = np.random.default_rng(seed)
        f = random_fiber(rng)
        centroid = center_fiber(f).points.mean(axis=0)
        assert np.linalg.norm(centroid) < 1e-12

    def test_shape_preserved(self):
        rng = np.random.default_rng(8)
        f = random_fiber(rng, n=12)
        g = center_fiber(f)
        diff_f = f.points[1:] - f.points[:-1]
        diff_g = g.points[1:] - g.points[:-1]
        np.testing.assert_allclose(diff_g, diff_f, atol=1e-12)


def make_labeled_dataset(counts: dict, seed=0):
    rng = np.random.default_rng(seed)
    fibers = []
    for label, count in counts.items():
        for i in range(count):
            fibers.append(random_fiber(rng, fid=f"{label.value}-{i}", label=label))
    return FiberDataset(tuple(fibers))


class TestSplit:
    def test_exact_halves(self):
        ds = make_labeled_dataset({FineLabel.GREY: 10})
        a, b = split_dataset(ds, 0.5, seed=1)
        assert len(a) == 5 and len(b) == 5

    def test_deterministic(self):
        ds = make_labeled_dataset({FineLabel.GREY: 30, FineLabel.FORNIX: 11})
        a1, b1 = split_dataset(ds, 0.7, seed=9)
        a2, b2 = split_dataset(ds, 0.7, seed=9)
        assert [f.id for f in a1] == [f.id for f in a2]
        assert [f.id for f in b1] == [f.id for f in b2]

    def test_stratified_counts(self):
        ds = make_labeled_dataset({FineLabel.ARCUATE: 250, FineLabel.CINGULUM: 250})
        train, test = split_dataset(ds, 0.8, seed=2)
        for part, expected in ((train, 200), (test, 50)):
            counts = part.label_counts()
            assert counts[FineLabel.ARCUATE] == expected
            assert counts[FineLabel.CINGULUM] == expected

    def test_partition_disjoint_exhaustive(self):
        ds = make_labeled_dataset({FineLabel.GREY: 17, FineLabel.UNCINATE: 5})
        a, b = split_dataset(ds, 0.33, seed=4)
        ids_a = {f.id for f in a}
        ids_b = {f.id for f in b}
        assert not ids_a & ids_b
        assert ids_a | ids_b == {f.id for f in ds}

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.2, 1.5])
    def test_fraction_validated(self, fraction):
        ds = make_labeled_dataset({FineLabel.GREY: 4})
        with pytest.raises(ValueError):
            split_dataset(ds, fraction, seed=0)
