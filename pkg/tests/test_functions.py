import math

import numpy as np
import pytest

from deltaconvex import (CORPUS_LABELS, LipschitzFunction, NormedSpace,
                         PointSet, corpus_function, distance_function,
                         make_corpus, verify_lipschitz)


class TestDistanceFunction:
    def test_values(self):
        space = NormedSpace(2, 2.0)
        pts = PointSet(np.array([[0.0, 0.0], [2.0, 1.0]]))
        f = distance_function(space, pts)
        assert np.isclose(f(np.array([0.0, 2.0])), 2.0)
        assert np.isclose(f(np.array([1.0, 0.0])), 1.0)
        assert f(np.array([2.0, 1.0])) == 0.0

    def test_batch_matches_scalar(self):
        space = NormedSpace(3, 2.0)
        rng = np.random.default_rng(0)
        pts = PointSet(rng.normal(size=(4, 3)))
        f = distance_function(space, pts)
        X = rng.normal(size=(50, 3))
        batch = f(X)
        singles = np.array([float(f(row)) for row in X])
        assert np.allclose(batch, singles, rtol=1e-12, atol=1e-12)

    def test_other_norms(self):
        space = NormedSpace(2, math.inf)
        f = distance_function(space, PointSet(np.array([[0.0, 0.0]])))
        assert f(np.array([0.5, -2.0])) == 2.0

    def test_dim_mismatch(self):
        space = NormedSpace(3, 2.0)
        with pytest.raises(ValueError):
            distance_function(space, PointSet(np.array([[0.0, 0.0]])))


class TestPointSetIO:
    def test_round_trip(self, tmp_path):
        pts = PointSet(np.array([[0.5, -1.0], [2.0, 3.5]]))
        path = tmp_path / "pts.txt"
        pts.to_file(path)
        back = PointSet.from_file(path)
        assert np.array_equal(back.points, pts.points)

    def test_bad_line_reports_number(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1.0 2.0\n1.0 oops\n")
        with pytest.raises(ValueError, match="2"):
            PointSet.from_file(path)

    def test_ragged_rejected(self, tmp_path):
        path = tmp_path / "ragged.txt"
        path.write_text("1.0 2.0\n1.0\n")
        with pytest.raises(ValueError):
            PointSet.from_file(path)


class TestCorpus:
    @pytest.mark.parametrize("p", [1.0, 2.0, 4.0, math.inf])
    def test_declared_constants_hold(self, p):
        space = NormedSpace(2, p)
        for f in make_corpus(space):
            report = verify_lipschitz(f, space, trials=4000, seed=1)
            assert not report.violation, (f.label, report.max_ratio)
            assert report.max_ratio <= f.lipschitz_constant * (1 + 1e-9)

    def test_labels(self):
        space = NormedSpace(2, 2.0)
        assert tuple(f.label for f in make_corpus(space)) == CORPUS_LABELS

    def test_corpus_function_lookup(self):
        space = NormedSpace(2, 2.0)
        f = corpus_function(space, "sawtooth")
        assert f.label == "sawtooth"
        with pytest.raises(KeyError):
            corpus_function(space, "nope")

    def test_sawtooth_values(self):
        space = NormedSpace(1, 2.0)
        f = corpus_function(space, "sawtooth")
        assert f(np.array([0.25])) == 0.25
        assert f(np.array([0.5])) == 0.5
        assert f(np.array([1.0])) == 0.0

    def test_mislabeled_constant_flagged(self):
        space = NormedSpace(2, 2.0)
        bad = LipschitzFunction(lambda x: 2.0 * space.norm(x), 1.0, "bad")
        report = verify_lipschitz(bad, space, trials=4000, seed=1)
        assert report.violation
        assert report.max_ratio > 1.5
