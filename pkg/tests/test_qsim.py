import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qfedsim import qsim
from qfedsim.errors import ChannelError, EmbeddingError, GateError
from qfedsim.qsim import CircuitSpec


def basis_state(index, dim=16):
    v = np.zeros(dim)
    v[index] = 1.0
    return np.outer(v, v).astype(complex)


def partial_trace_keep(rho, keep, n_qubits=4):
    """Reduced density matrix over `keep` qubits (qubit 0 = MSB)."""
    t = rho.reshape([2] * (2 * n_qubits))
    drop = [q for q in range(n_qubits) if q not in keep]
    for q in sorted(drop, reverse=True):
        t = np.trace(t, axis1=q, axis2=q + (t.ndim // 2))
    d = 2 ** len(keep)
    return t.reshape(d, d)


def random_state(rng, p=0.0, spec=None):
    spec = spec or CircuitSpec(noise_strength=p)
    params = rng.normal(size=spec.n_params)
    vec = rng.random(spec.dim)
    return qsim.run_circuit(params, vec, spec)


class TestAmplitudeEmbed:
    def test_basis_state(self):
        rho = qsim.amplitude_embed(np.eye(16)[0])
        assert np.allclose(rho, basis_state(0))

    def test_normalization_forced(self):
        v = np.zeros(16)
        v[0] = v[1] = 1.0
        rho = qsim.amplitude_embed(v)
        assert np.allclose(rho[:2, :2], 0.5)
        assert np.isclose(np.trace(rho).real, 1.0)

    def test_blob_bitstring_is_pure(self):
        rng = np.random.default_rng(7)
        bits = np.zeros(16)
        bits[rng.choice(16, size=6, replace=False)] = 1.0
        rho = qsim.amplitude_embed(bits)
        nz = rho[np.abs(rho) > 1e-12]
        assert np.allclose(nz, 1.0 / 6.0)
        assert abs(qsim.purity(rho) - 1.0) <= 1e-10

    def test_zero_input_fallback(self, caplog):
        rho = qsim.amplitude_embed(np.zeros(16))
        assert np.allclose(rho, basis_state(0))

    def test_zero_input_error_when_disabled(self):
        with pytest.raises(EmbeddingError):
            qsim.amplitude_embed(np.zeros(16), allow_zero_fallback=False)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(3)
        xs = rng.random((5, 16))
        batch = qsim.amplitude_embed_batch(xs)
        for i in range(5):
            assert np.allclose(batch[i], qsim.amplitude_embed(xs[i]))


class TestGates:
    def test_ry_pi_flips(self):
        rho = qsim.apply_rotation(basis_state(0), 0, "y", np.pi)
        assert np.allclose(rho, basis_state(8), atol=1e-12)

    def test_rz_leaves_diagonal_states(self):
        rng = np.random.default_rng(0)
        d = rng.random(16)
        rho = np.diag(d / d.sum()).astype(complex)
        out = qsim.apply_rotation(rho, 2, "z", 1.234)
        assert np.allclose(out, rho, atol=1e-12)

    def test_ry_half_pi_z_expectation(self):
        # single-qubit check: <Z> after RY(pi/2) on |0> is cos(pi/2) = 0
        rho = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
        out = qsim.apply_rotation(rho, 0, "y", np.pi / 2)
        z = out[0, 0].real - out[1, 1].real
        assert abs(z) <= 1e-12

    def test_cnot_flips_target(self):
        out = qsim.apply_cnot(basis_state(8), 0, 1)  # |1000> -> |1100>
        assert np.allclose(out, basis_state(12))

    def test_cnot_control_zero(self):
        out = qsim.apply_cnot(basis_state(0), 0, 1)
        assert np.allclose(out, basis_state(0))

    def test_cnot_equal_indices_raises(self):
        with pytest.raises(GateError):
            qsim.apply_cnot(basis_state(0), 2, 2)

    def test_bell_pair_marginals(self):
        rho = qsim.apply_rotation(basis_state(0), 0, "y", np.pi / 2)
        rho = qsim.apply_cnot(rho, 0, 1)
        pair = partial_trace_keep(rho, [0, 1])
        expected = np.zeros((4, 4), dtype=complex)
        expected[0, 0] = expected[0, 3] = expected[3, 0] = expected[3, 3] = 0.5
        assert np.allclose(pair, expected, atol=1e-12)
        for q in (0, 1):
            single = partial_trace_keep(rho, [q])
            assert np.allclose(single, np.eye(2) / 2, atol=1e-12)


class TestDepolarizing:
    def test_zero_strength_identity(self):
        rng = np.random.default_rng(1)
        rho = random_state(rng)
        assert np.allclose(qsim.apply_depolarizing(rho, 1, 0.0), rho)

    def test_full_strength_all_qubits(self):
        rho = random_state(np.random.default_rng(2))
        for q in range(4):
            rho = qsim.apply_depolarizing(rho, q, 1.0)
        assert np.allclose(rho, np.eye(16) / 16, atol=1e-12)

    def test_half_strength_on_basis_state(self):
        rho = qsim.apply_depolarizing(basis_state(0), 0, 0.5)
        expected = 0.75 * basis_state(0) + 0.25 * basis_state(8)
        assert np.allclose(rho, expected, atol=1e-12)

    def test_out_of_range_raises(self):
        with pytest.raises(ChannelError):
            qsim.apply_depolarizing(basis_state(0), 0, 1.5)

    def test_never_increases_purity(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            rho = random_state(rng, p=rng.uniform(0, 0.1))
            q = int(rng.integers(4))
            s = float(rng.uniform(0, 1))
            assert qsim.purity(qsim.apply_depolarizing(rho, q, s)) <= qsim.purity(rho) + 1e-12

    @settings(max_examples=30, deadline=None)
    @given(
        seed=st.integers(0, 2**32 - 1),
        qubit=st.integers(0, 3),
        strength=st.floats(0.0, 1.0),
    )
    def test_channel_preserves_state_invariants(self, seed, qubit, strength):
        rho = random_state(np.random.default_rng(seed), p=0.02)
        out = qsim.apply_depolarizing(rho, qubit, strength)
        qsim.check_density_matrix(out)

    def test_channels_on_distinct_qubits_commute(self):
        rng = np.random.default_rng(4)
        rho = random_state(rng)
        a = qsim.apply_depolarizing(qsim.apply_depolarizing(rho, 0, 0.3), 2, 0.7)
        b = qsim.apply_depolarizing(qsim.apply_depolarizing(rho, 2, 0.7), 0, 0.3)
        assert np.max(np.abs(a - b)) <= 1e-12


class TestRunCircuit:
    def test_zero_angles_no_noise_fixes_ground_state(self):
        # identity rotations + CNOT ring leave |0000> untouched
        spec = CircuitSpec(noise_strength=0.0)
        out = qsim.run_circuit(np.zeros(60), np.eye(16)[0], spec)
        assert np.allclose(out, basis_state(0), atol=1e-12)

    def test_full_noise_gives_maximally_mixed(self):
        spec = CircuitSpec(noise_strength=1.0)
        rng = np.random.default_rng(5)
        out = qsim.run_circuit(rng.normal(size=60), rng.random(16), spec)
        assert np.allclose(out, np.eye(16) / 16, atol=1e-12)

    def test_noisy_purity_bounds(self):
        rng = np.random.default_rng(6)
        out = random_state(rng, p=0.01)
        pur = qsim.purity(out)
        assert 1.0 / 16.0 <= pur < 1.0
        assert abs(np.trace(out).real - 1.0) <= 1e-10

    def test_unitary_part_preserves_purity(self):
        spec = CircuitSpec(noise_strength=0.0)
        rng = np.random.default_rng(7)
        vec = rng.random(16)
        out = qsim.run_circuit(rng.normal(size=60), vec, spec)
        assert abs(qsim.purity(out) - 1.0) <= 1e-10

    def test_batch_matches_single(self):
        spec = CircuitSpec(noise_strength=0.03)
        rng = np.random.default_rng(8)
        params = rng.normal(size=60)
        xs = rng.random((4, 16))
        batch = qsim.run_circuit_batch(params, xs, spec)
        for i in range(4):
            assert np.allclose(batch[i], qsim.run_circuit(params, xs[i], spec), atol=1e-13)

    def test_invariant_fuzz(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            out = random_state(rng, p=float(rng.uniform(0, 0.1)))
            qsim.check_density_matrix(out)


class TestReadout:
    def test_basis_state_probabilities(self):
        probs = qsim.class_probabilities(basis_state(0))
        assert np.allclose(probs, np.eye(8)[0])

    def test_uniform(self):
        probs = qsim.class_probabilities(np.eye(16) / 16)
        assert np.allclose(probs, 1.0 / 8.0)

    def test_bell_on_last_two_qubits(self):
        psi = np.zeros(16, dtype=complex)
        psi[0] = psi[3] = 1.0 / np.sqrt(2)  # (|0000> + |0011>)/sqrt(2)
        probs = qsim.class_probabilities(np.outer(psi, psi.conj()))
        expected = np.zeros(8)
        expected[0] = expected[1] = 0.5
        assert np.allclose(probs, expected, atol=1e-12)

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            probs = qsim.class_probabilities(random_state(rng, p=0.05))
            assert abs(probs.sum() - 1.0) <= 1e-10
            assert probs.min() >= 0.0

    def test_sampling_degenerate(self):
        rng = np.random.default_rng(11)
        counts = qsim.sample_class_counts(basis_state(0), 1000, rng)
        assert counts[0] == 1000 and counts.sum() == 1000

    def test_sampling_uniform_concentration(self):
        rng = np.random.default_rng(12)
        shots = 80000
        counts = qsim.sample_class_counts(np.eye(16) / 16, shots, rng)
        sigma = np.sqrt(shots * (1 / 8) * (7 / 8))
        assert np.all(np.abs(counts - shots / 8) <= 5 * sigma)

    def test_sampling_deterministic(self):
        rho = random_state(np.random.default_rng(13), p=0.02)
        a = qsim.sample_class_counts(rho, 500, np.random.default_rng(42))
        b = qsim.sample_class_counts(rho, 500, np.random.default_rng(42))
        assert np.array_equal(a, b)


class TestBackends:
    def test_compiled_matches_python(self):
        compiled = pytest.importorskip("qfedsim._kernels")
        from qfedsim import _kernels_py as fallback

        rng = np.random.default_rng(14)
        rho = np.ascontiguousarray(
            rng.normal(size=(3, 16, 16)) + 1j * rng.normal(size=(3, 16, 16))
        )
        gate = qsim.rotation_matrix("y", 0.37) @ qsim.rotation_matrix("z", -1.1)
        for q in range(4):
            assert np.allclose(
                compiled.apply_1q(rho, gate, q), fallback.apply_1q(rho, gate, q)
            )
            assert np.allclose(
                compiled.depolarize(rho, q, 0.4), fallback.depolarize(rho, q, 0.4)
            )
        for c, t in ((0, 1), (3, 0), (1, 3)):
            assert np.allclose(
                compiled.apply_cnot(rho, c, t), fallback.apply_cnot(rho, c, t)
            )

    def test_spec_geometry(self):
        spec = CircuitSpec()
        assert spec.n_params == 60
        assert spec.dim == 16
        assert spec.entangler_ring == ((0, 1), (1, 2), (2, 3), (3, 0))
