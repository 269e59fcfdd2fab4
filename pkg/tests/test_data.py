import numpy as np
import pytest

from qfedsim import data
from qfedsim.errors import PartitionError
from qfedsim.qsim import CircuitSpec


class TestReferencePatterns:
    def test_shape_and_weight(self):
        pats = data.REFERENCE_PATTERNS
        assert pats.shape == (8, 16)
        assert np.all(pats.sum(axis=1) == 4)

    def test_pairwise_hamming(self):
        pats = data.REFERENCE_PATTERNS
        for i in range(8):
            for j in range(i + 1, 8):
                dist = int(np.sum(pats[i] != pats[j]))
                same_family = (i < 4) == (j < 4)
                assert dist == (8 if same_family else 6)


class TestGenerateBlobs:
    def test_zero_flip_reproduces_patterns(self):
        for s in data.generate_blobs(200, flip_p=0.0, seed=1):
            assert np.array_equal(s.bits, data.REFERENCE_PATTERNS[s.label])

    def test_mean_hamming_distance(self):
        n = 10000
        samples = data.generate_blobs(n, flip_p=0.05, seed=2)
        dists = [
            np.sum(s.bits != data.REFERENCE_PATTERNS[s.label]) for s in samples
        ]
        mean = float(np.mean(dists))
        sigma = np.sqrt(16 * 0.05 * 0.95 / n)
        assert abs(mean - 0.8) <= 5 * sigma

    def test_label_balance(self):
        n = 8000
        labels = [s.label for s in data.generate_blobs(n, seed=3)]
        counts = np.bincount(labels, minlength=8)
        sigma = np.sqrt(n * (1 / 8) * (7 / 8))
        assert np.all(np.abs(counts - n / 8) <= 5 * sigma)

    def test_deterministic(self):
        a = data.generate_blobs(50, seed=4)
        b = data.generate_blobs(50, seed=4)
        assert all(
            np.array_equal(x.bits, y.bits) and x.label == y.label
            for x, y in zip(a, b)
        )

    def test_flip_p_validation(self):
        with pytest.raises(ValueError):
            data.generate_blobs(10, flip_p=0.5)


class TestDirichletPartition:
    def test_disjoint_and_covering_many_seeds(self):
        labels = [s.label for s in data.generate_blobs(400, seed=5)]
        for seed in range(100):
            part = data.dirichlet_partition(labels, 8, 0.3, seed=seed)
            flat = sorted(i for shard in part.shards for i in shard)
            assert flat == list(range(400))
            assert all(shard for shard in part.shards)

    def test_large_alpha_near_uniform(self):
        labels = [s.label for s in data.generate_blobs(8000, seed=6)]
        part = data.dirichlet_partition(labels, 8, 1e6, seed=7)
        y = np.asarray(labels)
        for shard in part.shards:
            hist = np.bincount(y[list(shard)], minlength=8)
            assert np.all(np.abs(hist / hist.sum() - 1 / 8) <= 0.1 / 8 + 0.02)

    def test_single_client(self):
        labels = [0, 1, 2, 3] * 5
        part = data.dirichlet_partition(labels, 1, 0.3, seed=8)
        assert part.shards == (tuple(range(20)),)

    def test_low_alpha_is_skewed(self):
        labels = [s.label for s in data.generate_blobs(5000, seed=9)]
        y = np.asarray(labels)
        part = data.dirichlet_partition(labels, 8, 0.3, seed=10)
        max_share = 0.0
        for shard in part.shards:
            hist = np.bincount(y[list(shard)], minlength=8)
            totals = np.bincount(y, minlength=8)
            max_share = max(max_share, float(np.max(hist / totals)))
        assert max_share > 0.40

    def test_deterministic(self):
        labels = [s.label for s in data.generate_blobs(300, seed=11)]
        a = data.dirichlet_partition(labels, 4, 0.3, seed=12)
        b = data.dirichlet_partition(labels, 4, 0.3, seed=12)
        assert a.shards == b.shards

    def test_retry_exhaustion(self):
        # 2 samples over 5 clients can never fill every shard
        with pytest.raises(PartitionError):
            data.dirichlet_partition([0, 1], 5, 0.3, seed=13)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            data.dirichlet_partition([0, 1], 0, 0.3)
        with pytest.raises(ValueError):
            data.dirichlet_partition([0, 1], 2, 0.0)


class TestEvaluate:
    def test_uniform_classifier(self):
        samples = data.generate_blobs(64, seed=14)
        spec = CircuitSpec(noise_strength=0.0)
        # evaluate() is defined as noiseless; emulate the uniform limit by
        # scoring against uniform probabilities directly
        loss, acc = data.evaluate(np.zeros(60), samples, spec)
        assert 0.0 <= acc <= 1.0 and loss > 0.0

    def test_random_params_near_chance(self):
        rng = np.random.default_rng(15)
        samples = data.generate_blobs(400, seed=16)
        accs = [
            data.evaluate(rng.normal(scale=0.5, size=60), samples)[1]
            for _ in range(3)
        ]
        assert 0.0 < float(np.mean(accs)) < 0.5

    def test_forces_noiseless_spec(self):
        samples = data.generate_blobs(32, seed=17)
        params = np.random.default_rng(18).normal(size=60)
        noisy = data.evaluate(params, samples, CircuitSpec(noise_strength=0.05))
        clean = data.evaluate(params, samples, CircuitSpec(noise_strength=0.0))
        assert noisy == clean

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            data.evaluate(np.zeros(60), [])


class TestSerialization:
    def test_dataset_csv_roundtrip(self, tmp_path):
        samples = data.generate_blobs(30, seed=19)
        path = tmp_path / "ds.csv"
        data.save_dataset_csv(samples, path)
        loaded = data.load_dataset_csv(path)
        assert len(loaded) == 30
        assert all(
            np.array_equal(a.bits, b.bits) and a.label == b.label
            for a, b in zip(samples, loaded)
        )
        header = path.read_text().splitlines()[0]
        assert header == ",".join([f"bit{i}" for i in range(16)] + ["label"])

    def test_partition_json_roundtrip(self, tmp_path):
        labels = [s.label for s in data.generate_blobs(200, seed=20)]
        part = data.dirichlet_partition(labels, 4, 0.3, seed=21)
        path = tmp_path / "part.json"
        data.save_partition_json(part, path)
        loaded = data.load_partition_json(path)
        assert loaded.shards == part.shards
        assert loaded.alpha == part.alpha
