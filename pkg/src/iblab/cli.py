"""Command-line interface: ``iblab <command> [flags]``.

Every command writes CSV (to ``--out`` or standard output).  Exit status is
0 on success, 2 on usage errors and 3 on malformed scenario/network files.
"""
from __future__ import annotations

import argparse
import os
import sys
from typing import List, Optional

import numpy as np

from .dist import marginal, read_scenario, sample
from .exceptions import IBLabError, ScenarioFormatError
from .ibcost import (CSV_HEADER, Argmax, CostSpec, Threshold, evaluate, format_info,
                     precision_bound_report, random_bound_trial, two_class_head)
from .info import GridQuantizer, ThresholdQuantizer, dimension_slopes
from .net import Network, NoiseSpec, format_network, output_law, parse_network
from .scenarios import (SCENARIOS, Scenario, fig1_network, fig2_scenario, fig3_scenario,
                        robustness_probe, sweep)
from .train import TrainConfig, spread_init, train_sgd
from .validation import check_beta, check_seed, parse_grid

EXIT_USAGE, EXIT_FORMAT = 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _noise(text: Optional[str]) -> NoiseSpec:
    if text is None or text == "none":
        return NoiseSpec()
    fam, _, param = text.partition(":")
    try:
        return NoiseSpec(fam, float(param))
    except ValueError as exc:
        raise UsageError(f"bad noise spec {text!r}: {exc}") from None


def _scenario(name: str) -> Scenario:
    if name in SCENARIOS:
        return SCENARIOS[name]()
    if not os.path.exists(name):
        raise UsageError(f"unknown scenario {name!r} (built-ins: {', '.join(SCENARIOS)})")
    return Scenario(os.path.basename(name), read_scenario(name), 0, f"loaded from {name}")


def _encoders(scen_name: str):
    if scen_name == "fig2":
        return fig2_scenario()[1]
    if scen_name == "fig3":
        f = fig3_scenario()
        return {"f_I": f.f_I, "f_II": f.f_II}
    return {}


def _network(args, scen: Scenario, param: Optional[float] = None) -> Network:
    if getattr(args, "net", None):
        with open(args.net, encoding="utf-8") as fh:
            return parse_network(fh.read())
    if getattr(args, "encoder", None):
        enc = _encoders(args.scenario)
        if args.encoder not in enc:
            raise UsageError(f"unknown encoder {args.encoder!r} for {args.scenario} (have: {', '.join(enc) or 'none'})")
        return enc[args.encoder]
    if param is None:
        raise UsageError("give --param, --encoder or --net")
    return fig1_network(param, args.b, scen.coordinate, scen.joint.dim)


def _spec(args) -> CostSpec:
    rule = Argmax() if args.rule == "argmax" else Threshold(0, args.threshold)
    ql_prime = ThresholdQuantizer(args.threshold) if args.qprime == "threshold" else None
    qx = GridQuantizer(args.mx) if args.mx else None
    eta = _noise(args.noise)
    if args.cost == "noisy" and not eta.active:
        raise UsageError("--cost noisy needs --noise uniform:W or gaussian:S")
    try:
        return CostSpec(args.cost, check_beta(args.beta), args.layer, rule, qx, GridQuantizer(args.m),
                        ql_prime, eta if eta.active else NoiseSpec("uniform", 0.05),
                        _noise(args.noise_prime) if args.noise_prime else None)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _write(args, lines: List[str]):
    text = "\n".join(lines) + "\n"
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _prepare(spec: CostSpec, net: Network) -> Network:
    if spec.variant == "probabilistic" and net.n_outputs == 1 and net.layers[-1].activation.kind != "sigmoid":
        return two_class_head(net)
    return net


# --------------------------------------------------------------------------


def cmd_sweep(args):
    scen = _scenario(args.scenario)
    spec = _spec(args)
    seed = check_seed(args.seed, required=False)
    family = lambda a: _prepare(spec, fig1_network(a, args.b, scen.coordinate, scen.joint.dim))
    res = sweep(scen, family, parse_grid(args.grid), spec, seed=seed)
    lines = ["param,compression,precision,total"]
    for p, r in res.rows():
        lines.append(f"{p:.6f},{format_info(r.compression)},{format_info(r.precision)},{format_info(r.total)}")
    _write(args, lines)


def cmd_eval(args):
    scen = _scenario(args.scenario)
    spec = _spec(args)
    net = _prepare(spec, _network(args, scen, args.param))
    r = evaluate(scen.joint, net, spec, seed=check_seed(args.seed, required=False))
    _write(args, [CSV_HEADER, r.csv_row()])


def cmd_train(args):
    seed = check_seed(args.seed)
    scen = _scenario(args.scenario)
    noise = _noise(args.noise)
    X0 = sample(scen.joint, 2000, seed).X
    net = spread_init(X0, args.hidden, args.activation, noise, seed=seed)
    cfg = TrainConfig(steps=args.steps, lr=args.lr, batch_size=args.batch_size, n_noise=args.n_noise,
                      seed=seed, eval_every=args.eval_every, eval_n=args.eval_n)
    net, trace = train_sgd(scen.joint, net, cfg, Threshold(0, args.threshold))
    _write(args, trace.csv_lines())
    if args.save_net:
        with open(args.save_net, "w", encoding="utf-8") as fh:
            fh.write(format_network(net))


def cmd_dims(args):
    scen = _scenario(args.scenario)
    mu = marginal(scen.joint)
    target = output_law(_network(args, scen, args.param), mu) if (args.net or args.encoder or args.param is not None) else mu
    try:
        m_list = [int(v) for v in args.m_list.split(",")]
    except ValueError:
        raise UsageError(f"bad --m-list {args.m_list!r}") from None
    rep = dimension_slopes(target, m_list)
    lines = ["m,shannon_slope,renyi2_slope"] + [f"{m},{s:.6f},{r:.6f}" for m, s, r in rep.rows]
    _write(args, lines)


def cmd_bound_check(args):
    seed = check_seed(args.seed)
    rng = np.random.default_rng(seed)
    lines = ["trial,deterministic,i_y_l,i_y_ytilde,h_y,cross_entropy_l,cross_entropy_ytilde,lower_bound,violations"]
    n_bad = 0
    for t in range(args.trials):
        det = args.mode == "deterministic" or (args.mode == "mixed" and t % 2 == 0)
        rep = precision_bound_report(*random_bound_trial(rng, det))
        bad = rep.violations(args.slack)
        n_bad += bool(bad)
        lines.append(",".join([str(t), str(int(det))] + [f"{v:.9f}" for v in (
            rep.i_y_l, rep.i_y_ytilde, rep.h_y, rep.cross_entropy_l, rep.cross_entropy_ytilde,
            rep.lower_bound)] + [";".join(bad)]))
    _write(args, lines)
    print(f"trials: {args.trials}, trials with violations: {n_bad}", file=sys.stderr)


def cmd_probe(args):
    seed = check_seed(args.seed)
    scen = _scenario(args.scenario)
    net = _network(args, scen, args.param)
    noise = _noise(args.noise)
    rate, se = robustness_probe(scen, net, Threshold(0, args.threshold), noise, args.n, seed)
    _write(args, ["encoder,noise,rate,se",
                  f"{args.encoder or args.net or args.param},{args.noise or 'none'},{rate:.6f},{se:.6f}"])


# --------------------------------------------------------------------------


def _cost_flags(p):
    p.add_argument("--cost", default="raw", choices=["raw", "decision", "probabilistic", "quantized", "noisy"],
                   help="cost variant (default raw)")
    p.add_argument("--beta", type=float, default=2.0, help="trade-off parameter, must exceed 1 (default 2)")
    p.add_argument("--layer", type=int, default=None, help="representation layer index (default: output)")
    p.add_argument("--rule", default="threshold", choices=["threshold", "argmax"], help="decision rule")
    p.add_argument("--threshold", type=float, default=0.5, help="decision / Q'_L threshold (default 0.5)")
    p.add_argument("--m", type=int, default=4, help="Q_L grid resolution for --cost quantized (default 4)")
    p.add_argument("--mx", type=int, default=0, help="Q_X grid resolution; 0 leaves X unquantized")
    p.add_argument("--qprime", default="threshold", choices=["threshold", "none"], help="Q'_L for precision")
    p.add_argument("--noise", default=None, help="eta for --cost noisy, e.g. uniform:0.05 or gaussian:0.1")
    p.add_argument("--noise-prime", default=None, help="eta' (default: same as --noise)")
    p.add_argument("--seed", type=int, default=None, help="seed (needed only for Monte-Carlo paths)")


def _net_flags(p):
    p.add_argument("--param", type=float, default=None, help="ramp offset a of the clip network")
    p.add_argument("--b", type=float, default=0.25, help="ramp width b (default 0.25)")
    p.add_argument("--encoder", default=None, help="named built-in encoder (fig2: f1_disc..f3_cont, fig3: f_I, f_II)")
    p.add_argument("--net", default=None, help="network file (one 'layer' record per line)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="iblab", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--format", default="csv", choices=["csv"], help="output format (csv only)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sweep", help="evaluate a cost over a grid of ramp offsets",
                       description="Sweep the clip-network offset a over --grid.\n"
                                   "CSV columns: param,compression,precision,total ('inf' marks infinite values).",
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--scenario", required=True, help=f"built-in ({', '.join(SCENARIOS)}) or scenario file")
    p.add_argument("--grid", default="0:5:0.05", help="lo:hi:step (default 0:5:0.05)")
    p.add_argument("--b", type=float, default=0.25, help="ramp width b (default 0.25)")
    p.add_argument("--out", default=None, help="output CSV path (default stdout)")
    _cost_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="evaluate one cost",
                       description="Evaluate one cost variant.\n"
                                   "CSV columns: " + CSV_HEADER + " (standard errors empty for exact variants).",
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", default=None)
    _net_flags(p)
    _cost_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("train", help="SGD on the cross-entropy surrogate",
                       description="Train a one-hidden-layer noisy classifier.\n"
                                   "CSV columns: step,loss,compression,precision,total "
                                   "(cost columns only on evaluation steps).",
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--scenario", default="fig2")
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--lr", type=float, default=0.2)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--n-noise", type=int, default=1)
    p.add_argument("--hidden", type=int, default=4)
    p.add_argument("--activation", default="leaky_relu:0.1")
    p.add_argument("--noise", default="uniform:0.05", help="hidden-layer noise (default uniform:0.05)")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--eval-every", type=int, default=0, help="evaluate the decision cost every k steps")
    p.add_argument("--eval-n", type=int, default=20000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--save-net", default=None, help="write the trained network to this file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("dims", help="quantized-entropy dimension slopes",
                       description="Slopes H([Z]_m)/log2 m and H2([Z]_m)/log2 m for Z = X, or the network "
                                   "output if a network is given.\nCSV columns: m,shannon_slope,renyi2_slope.",
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--scenario", required=True)
    p.add_argument("--m-list", default="2,4,8,16,32,64,128,256,512,1024")
    p.add_argument("--out", default=None)
    _net_flags(p)
    p.set_defaults(func=cmd_dims)

    p = sub.add_parser("bound-check", help="random checks of the cross-entropy precision bound",
                       description="Random finite joints, decoders and posteriors.\nCSV columns: trial,"
                                   "deterministic,i_y_l,i_y_ytilde,h_y,cross_entropy_l,cross_entropy_ytilde,"
                                   "lower_bound,violations.",
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--mode", default="deterministic", choices=["deterministic", "stochastic", "mixed"])
    p.add_argument("--slack", type=float, default=1e-9)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bound_check)

    p = sub.add_parser("probe", help="misclassification rate under input noise",
                       description="Monte-Carlo robustness probe.\nCSV columns: encoder,noise,rate,se.",
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--scenario", required=True)
    p.add_argument("--noise", default="none", help="input noise, e.g. uniform:0.2 or gaussian:0.05")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--n", type=int, default=100000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=None)
    _net_flags(p)
    p.set_defaults(func=cmd_probe)
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except ScenarioFormatError as exc:
        print(f"iblab: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (UsageError, IBLabError, ValueError, OSError) as exc:
        print(f"iblab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
