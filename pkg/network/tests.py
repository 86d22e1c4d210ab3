import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st

from stochkin.exceptions import NegativeStateError
from .reactions import (
    ParamVector, ReactionNetwork, drift, finite_difference_jacobian, gene_expression_network,
    hazards, immigration_death_network, jacobian, lotka_volterra_network, pure_death_network,
    sir_network, total_hazard,
)

LV_TRUTH = (1.0, 0.005, 0.6)
GENE_TRUTH = (0.44, 0.52, 10, 15, 0.4, 7, 3, 10)


class ParamVectorTests(SimpleTestCase):
    def test_log_round_trip(self):
        c = ParamVector(LV_TRUTH, ('c1', 'c2', 'c3'))
        np.testing.assert_allclose(ParamVector.from_log(c.log_values).values, c.values)
        self.assertEqual(c['c2'], 0.005)

    def test_rejects_non_positive_values(self):
        with self.assertRaises(ValueError):
            ParamVector([1.0, 0.0])
        with self.assertRaises(ValueError):
            ParamVector([1.0, np.nan])

    def test_values_are_read_only(self):
        c = ParamVector(LV_TRUTH)
        with self.assertRaises(ValueError):
            c.values[0] = 2.0


class HazardTests(SimpleTestCase):
    def test_lotka_volterra_hazards(self):
        h = hazards(lotka_volterra_network(), np.array([70, 80]), LV_TRUTH)
        np.testing.assert_allclose(h, [70, 28, 48])
        self.assertAlmostEqual(total_hazard(h), 146)

    def test_zero_state_gives_zero_hazards(self):
        for net, c in ((lotka_volterra_network(), LV_TRUTH), (sir_network(), (0.001, 0.1))):
            h = hazards(net, np.zeros(net.num_species), c)
            np.testing.assert_array_equal(h, 0)
            self.assertEqual(total_hazard(h), 0)

    def test_gene_expression_at_pulse_centre(self):
        h = hazards(gene_expression_network(), np.array([10, 150]), GENE_TRUTH, t=7.0)
        np.testing.assert_allclose(h, [18, 4.4, 100, 78])

    def test_sir_total_hazard(self):
        h = hazards(sir_network(), np.array([119, 1]), (0.001, 0.1))
        self.assertAlmostEqual(total_hazard(h), 0.219)

    def test_batch_evaluation_matches_rows(self):
        net = lotka_volterra_network()
        states = np.array([[70, 80], [3, 0], [0, 12]])
        batch = hazards(net, states, LV_TRUTH)
        for row, state in zip(batch, states):
            np.testing.assert_allclose(row, hazards(net, state, LV_TRUTH))

    def test_negative_state_is_rejected(self):
        with self.assertRaises(NegativeStateError):
            hazards(lotka_volterra_network(), np.array([-1.0, 5.0]), LV_TRUTH)

    def test_second_order_reactant_uses_binomial(self):
        net = ReactionNetwork.mass_action(('A',), ('k',), [[2]], [[0]])
        self.assertAlmostEqual(hazards(net, np.array([5]), (0.5,))[0], 0.5 * 10)

    @given(
        st.integers(min_value=0, max_value=500),
        st.integers(min_value=0, max_value=500),
        st.integers(min_value=0, max_value=2),
        st.floats(min_value=1e-3, max_value=1e3),
    )
    @settings(deadline=None, max_examples=50)
    def test_mass_action_is_linear_in_its_rate(self, prey, predator, index, k):
        net = lotka_volterra_network()
        x = np.array([prey, predator])
        scaled = np.array(LV_TRUTH)
        scaled[index] *= k
        base, h = hazards(net, x, LV_TRUTH), hazards(net, x, scaled)
        expected = base.copy()
        expected[index] *= k
        np.testing.assert_allclose(h, expected, rtol=1e-12)


class StoichiometryTests(SimpleTestCase):
    def test_built_in_matrices(self):
        np.testing.assert_array_equal(lotka_volterra_network().stoich, [[1, -1, 0], [0, 1, -1]])
        np.testing.assert_array_equal(gene_expression_network().stoich, [[1, -1, 0, 0], [0, 0, 1, -1]])
        np.testing.assert_array_equal(sir_network().stoich, [[-1, 0], [1, -1]])

    def test_stoich_is_products_minus_reactants_transposed(self):
        for net in (lotka_volterra_network(), gene_expression_network(), sir_network()):
            np.testing.assert_array_equal(net.stoich, (net.products - net.reactants).T)

    def test_rejects_negative_coefficients(self):
        with self.assertRaises(ValueError):
            ReactionNetwork.mass_action(('A',), ('k',), [[-1]], [[0]])

    def test_time_homogeneity(self):
        self.assertTrue(lotka_volterra_network().is_time_homogeneous)
        self.assertFalse(gene_expression_network().is_time_homogeneous)

    def test_spec_round_trip(self):
        for net in (lotka_volterra_network(), gene_expression_network(), immigration_death_network()):
            rebuilt = ReactionNetwork.from_spec(net.to_spec())
            np.testing.assert_array_equal(rebuilt.stoich, net.stoich)
            self.assertEqual(rebuilt.param_names, net.param_names)
            x = np.array([7] * net.num_species)
            np.testing.assert_allclose(hazards(rebuilt, x, np.arange(1.0, len(net.param_names) + 1), 2.0),
                                       hazards(net, x, np.arange(1.0, len(net.param_names) + 1), 2.0))


class JacobianTests(SimpleTestCase):
    def test_lotka_volterra_jacobian(self):
        jac = jacobian(lotka_volterra_network(), np.array([70.0, 80.0]), LV_TRUTH)
        np.testing.assert_allclose(jac, [[0.6, -0.35], [0.4, -0.25]])

    def test_gene_expression_jacobian_is_state_independent(self):
        net = gene_expression_network()
        for z in ([1.0, 2.0], [40.0, 500.0]):
            np.testing.assert_allclose(jacobian(net, np.array(z), GENE_TRUTH, 3.0), [[-0.44, 0], [10, -0.52]])

    def test_drift_matches_lotka_volterra_rates(self):
        np.testing.assert_allclose(drift(lotka_volterra_network(), [70, 80], LV_TRUTH), [42, -20])

    def test_finite_differences_agree_with_analytic_forms(self):
        rng = np.random.default_rng(11)
        cases = (
            (lotka_volterra_network(), LV_TRUTH, 200),
            (gene_expression_network(), GENE_TRUTH, 300),
            (sir_network(), (0.001, 0.1), 120),
            (pure_death_network(), (0.6,), 50),
        )
        for net, c, scale in cases:
            for _ in range(100):
                z = rng.uniform(1.0, scale, size=net.num_species)
                analytic = jacobian(net, z, c, 4.0)
                numeric = finite_difference_jacobian(net, z, c, 4.0)
                np.testing.assert_allclose(numeric, analytic, rtol=1e-4, atol=1e-4 * np.abs(analytic).max())
