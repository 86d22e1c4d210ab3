import numpy as np
from django.test import SimpleTestCase
from scipy import linalg, optimize, special, stats

from network.reactions import (
    ReactionNetwork, gene_expression_network, immigration_death_network, lotka_volterra_network,
    pure_death_network,
)
from stochkin.exceptions import HazardBoundError, NonFiniteHazardError
from stochkin.streams import StreamFactory
from .simulators import ssa_grid, ssa_propagate, ssa_simulate, upper_bound_rate

LV_TRUTH = (1.0, 0.005, 0.6)
GENE_TRUTH = np.array([0.44, 0.52, 10, 15, 0.4, 7, 3, 10])


def generator_matrix(kappa, gamma, size):
    """CME generator of the immigration-death process truncated to {0..size-1}."""
    q = np.zeros((size, size))
    for n in range(size):
        if n + 1 < size:
            q[n, n + 1] = kappa
        if n > 0:
            q[n, n - 1] = gamma * n
        q[n, n] = -q[n].sum()
    return q


def first_reaction_gene_expression(c, x0, t0, t1, rng):
    """Gene expression by the first-reaction method, inverting the integrated pulse exactly."""
    gamma_r, gamma_p, kappa_p, b0, b1, b2, b3 = c[:7]
    stoich = gene_expression_network().stoich
    x, t = np.array(x0, dtype=np.int64), t0
    root = np.sqrt(b1)

    def integrated_pulse(s):
        gaussian = b0 * np.sqrt(np.pi) / (2 * root) * (special.erf(root * (s - b2)) - special.erf(root * (t - b2)))
        return gaussian + b3 * (s - t)

    while True:
        clocks = np.full(4, np.inf)
        target = rng.standard_exponential()
        if integrated_pulse(t1) > target:
            clocks[0] = optimize.brentq(lambda s: integrated_pulse(s) - target, t, t1, xtol=1e-12)
        for i, rate in ((1, gamma_r * x[0]), (2, kappa_p * x[0]), (3, gamma_p * x[1])):
            if rate > 0:
                clocks[i] = t + rng.standard_exponential() / rate
        reaction = int(np.argmin(clocks))
        if clocks[reaction] > t1:
            return x
        t = clocks[reaction]
        x = x + stoich[:, reaction]


class UpperBoundTests(SimpleTestCase):
    def test_homogeneous_bound_is_total_hazard(self):
        self.assertAlmostEqual(upper_bound_rate(lotka_volterra_network(), np.array([70, 80]), LV_TRUTH, 0, 1), 146)

    def test_gene_expression_bound(self):
        bound = upper_bound_rate(gene_expression_network(), np.array([10, 150]), GENE_TRUTH, 0.0, 0.25)
        self.assertAlmostEqual(bound, 18 + 4.4 + 100 + 78)

    def test_gene_expression_bound_at_zero_state(self):
        c = GENE_TRUTH.copy()
        c[6] = 0.0
        self.assertAlmostEqual(upper_bound_rate(gene_expression_network(), np.array([0, 0]), c, 3, 4), 15)

    def test_batch_bound(self):
        bound = upper_bound_rate(lotka_volterra_network(), np.array([[70, 80], [0, 0]]), LV_TRUTH, 0, 1)
        np.testing.assert_allclose(bound, [146, 0])


class SimulateTests(SimpleTestCase):
    def setUp(self):
        self.streams = StreamFactory(2024)

    def test_zero_rates_produce_no_events(self):
        path = ssa_simulate(lotka_volterra_network(), np.array([70, 80]), np.zeros(3), 0, 10, self.streams.generator(0))
        self.assertEqual(path.event_counts.sum(), 0)
        self.assertEqual(path.events, [])
        np.testing.assert_array_equal(path.final_state.x, [70, 80])

    def test_path_invariants(self):
        net = lotka_volterra_network()
        path = ssa_simulate(net, np.array([70, 80]), LV_TRUTH, 0.0, 2.0, self.streams.generator(1))
        times = [time for time, _ in path.events]
        self.assertTrue(all(0.0 < a < b <= 2.0 for a, b in zip(times, times[1:])))
        np.testing.assert_array_equal(path.final_state.x, path.initial.x + net.stoich @ path.event_counts)
        self.assertEqual(len(path.events), path.event_counts.sum())
        x = path.initial.x.copy()
        for _, reaction in path.events:
            x = x + net.stoich[:, reaction]
            self.assertTrue(np.all(x >= 0))
        np.testing.assert_array_equal(x, path.final_state.x)

    def test_same_seed_same_path(self):
        net = gene_expression_network()
        first = ssa_simulate(net, np.array([10, 150]), GENE_TRUTH, 0, 1, StreamFactory(5).generator(4, 0))
        second = ssa_simulate(net, np.array([10, 150]), GENE_TRUTH, 0, 1, StreamFactory(5).generator(4, 0))
        self.assertEqual(first.events, second.events)

    def test_rejects_empty_interval(self):
        with self.assertRaises(ValueError):
            ssa_simulate(pure_death_network(), np.array([3]), (1.0,), 1.0, 1.0, self.streams.generator(0))

    def test_pure_death_extinction_time(self):
        net, rng, rate = pure_death_network(), self.streams.generator(2), 0.6
        extinction = np.array([
            ssa_simulate(net, np.array([20]), (rate,), 0.0, 200.0, rng).events[-1][0]
            for _ in range(2000)
        ])
        phases = 1.0 / (rate * np.arange(1, 21))
        standard_error = np.sqrt(np.sum(phases ** 2) / extinction.size)
        self.assertLess(abs(extinction.mean() - phases.sum()), 4 * standard_error)

    def test_immigration_death_time_average(self):
        net, horizon = immigration_death_network(), 2000.0
        path = ssa_simulate(net, np.array([10]), (10.0, 1.0), 0.0, horizon, self.streams.generator(3))
        area, x, last = 0.0, 10, 0.0
        for time, reaction in path.events:
            area += x * (time - last)
            x, last = x + net.stoich[0, reaction], time
        area += x * (horizon - last)
        # integrated autocorrelation time of the process is 1/gamma
        self.assertLess(abs(area / horizon - 10.0), 5 * np.sqrt(2 * 10.0 / horizon))

    def test_bad_bound_is_reported(self):
        class LooseLaw:
            time_dependent = True

            def rate(self, states, c, t):
                return np.full(states.shape[0], 5.0)

            def upper_bound(self, states, c, t0, t1):
                return np.full(states.shape[0], 1.0)

        net = ReactionNetwork(('X',), ('k',), [[0]], [[1]], (LooseLaw(),))
        with self.assertRaises(HazardBoundError):
            ssa_simulate(net, np.array([0]), (1.0,), 0, 100, self.streams.generator(0))


class PropagateTests(SimpleTestCase):
    def setUp(self):
        self.streams = StreamFactory(77)

    def test_matches_truncated_master_equation(self):
        kappa, gamma, size, start = 3.0, 1.0, 40, 2
        states = np.full((100_000, 1), start)
        final = ssa_propagate(immigration_death_network(), states, (kappa, gamma), 0.0, 1.0, self.streams.generator(0))
        empirical = np.bincount(final[:, 0], minlength=size)[:size] / states.shape[0]
        exact = linalg.expm(generator_matrix(kappa, gamma, size))[start]
        self.assertLess(0.5 * np.abs(empirical - exact).sum(), 0.01)

    def test_thinning_agrees_with_direct_method(self):
        # b1 = 0 makes the pulse a constant, so the thinning branch simulates a homogeneous model
        c = GENE_TRUTH.copy()
        c[4] = 0.0
        thinned = ssa_propagate(gene_expression_network(), np.tile([10, 150], (3000, 1)), c, 0, 1,
                                self.streams.generator(1))
        constant = ReactionNetwork.mass_action(
            ('mRNA', 'protein'), ('gamma_R', 'gamma_P', 'kappa_P', 'kappa_R'),
            reactants=[[0, 0], [1, 0], [1, 0], [0, 1]],
            products=[[1, 0], [0, 0], [1, 1], [0, 0]],
            rates=(3, 0, 2, 1),
        )
        direct = ssa_propagate(constant, np.tile([10, 150], (3000, 1)), (0.44, 0.52, 10, 18), 0, 1,
                               self.streams.generator(2))
        for species in range(2):
            self.assertGreater(stats.ks_2samp(thinned[:, species], direct[:, species]).pvalue, 0.001)

    def test_thinning_agrees_with_first_reaction_method(self):
        c = np.array([0.44, 0.1, 1.0, 15, 0.4, 7, 3, 10])
        x0, t0, t1 = np.array([10, 20]), 4.0, 6.0
        thinned = ssa_propagate(gene_expression_network(), np.tile(x0, (4000, 1)), c, t0, t1,
                                self.streams.generator(3))
        rng = self.streams.generator(4)
        reference = np.array([first_reaction_gene_expression(c, x0, t0, t1, rng) for _ in range(1000)])
        for species in range(2):
            gap = thinned[:, species].mean() - reference[:, species].mean()
            error = np.sqrt(thinned[:, species].var() / 4000 + reference[:, species].var() / 1000)
            self.assertLess(abs(gap), 4 * error)

    def test_propagate_agrees_with_scalar_simulation(self):
        net, rng = lotka_volterra_network(), self.streams.generator(5)
        batch = ssa_propagate(net, np.tile([70, 80], (2000, 1)), LV_TRUTH, 0, 0.5, rng)
        single = np.array([
            ssa_simulate(net, np.array([70, 80]), LV_TRUTH, 0, 0.5, rng, record_events=False).final_state.x
            for _ in range(2000)
        ])
        for species in range(2):
            error = np.sqrt((batch[:, species].var() + single[:, species].var()) / 2000)
            self.assertLess(abs(batch[:, species].mean() - single[:, species].mean()), 4 * error)

    def test_grid_starts_at_initial_state(self):
        path = ssa_grid(lotka_volterra_network(), np.array([70, 80]), LV_TRUTH, np.arange(1, 6), self.streams.generator(6))
        self.assertEqual(path.shape, (5, 2))
        np.testing.assert_array_equal(path[0], [70, 80])

    def test_non_finite_thinning_bound_is_an_error(self):
        c = GENE_TRUTH.copy()
        c[3] = np.inf
        with self.assertRaises(NonFiniteHazardError):
            ssa_propagate(gene_expression_network(), np.tile([10, 150], (5, 1)), c, 0.0, 1.0,
                          self.streams.generator(7))
        with self.assertRaises(NonFiniteHazardError):
            ssa_simulate(gene_expression_network(), np.array([10, 150]), c, 0.0, 1.0, self.streams.generator(8))
