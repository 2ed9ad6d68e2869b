"""Information-bottleneck costs on small piecewise-linear networks.

Exact hybrid distributions (:mod:`iblab.dist`), networks and their exact
pushforwards (:mod:`iblab.net`), information measures (:mod:`iblab.info`),
cost variants (:mod:`iblab.ibcost`), training (:mod:`iblab.train`) and the
built-in scenarios (:mod:`iblab.scenarios`).
"""
from .dist import (ClassConditional, Dataset, HybridMeasure, LabeledJoint, PointMass, ScalarLaw,
                   UniformPiece, empirical_joint, format_scenario, marginal, parse_scenario,
                   read_scenario, sample)
from .exceptions import *  # noqa: F401,F403
from .ibcost import (Argmax, BoundReport, CostReport, CostSpec, Threshold, divergences, evaluate,
                     ib_decision, ib_noisy, ib_probabilistic, ib_quantized, ib_raw,
                     precision_bound_report, two_class_head)
from .info import (INF, DimensionReport, GridQuantizer, Pmf, QuantizerSpec, ThresholdQuantizer,
                   dimension_slopes, entropy, mi_discrete, mi_input_representation, quantize_measure,
                   quantized_mi, renyi2)
from .net import (Activation, Layer, LayerTrace, Network, NoiseSpec, PiecewiseLinear, as_scalar_pwl,
                  format_network, forward, grad_params, output_law, parse_network, pushforward,
                  pwl_network)
from .scenarios import (Scenario, SweepResult, fig1_network, fig1_scenario, fig2_scenario,
                        fig3_scenario, robustness_probe, sweep)
from .train import TrainConfig, TrainTrace, finite_diff_grad, mc_cost, spread_init, train_sgd

__version__ = "0.1.0"
