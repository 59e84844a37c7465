"""Command-line interface.

Subcommands:
  chainwalk  run a sweep from a config file
  solve      run the penalized solver on a dataset dump
  exact      print the exact solution of a chain model
  validate   check a config and report derived solver parameters
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .benchmark import (
    ConfigError,
    _axis_values,
    _method_grid,
    _hyperparams_string,
    load_config,
    load_dataset,
    run_sweep,
)
from .features import FeatureMapSpec, build_lstd_data
from .lstd import assemble_operator, default_config, lstd_closed_form, solve_assembled
from .mdp import ACTION_NAMES, ChainMdpModel, exact_optimal, sample_batch
from .splitting import DivergenceError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmclstd",
        description="Sparse LSTD policy evaluation and chain-walk benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    chainwalk = sub.add_parser(
        "chainwalk", help="run a benchmark sweep from a config file"
    )
    chainwalk.add_argument("--config", required=True, help="config file path")
    chainwalk.add_argument("--out", help="override the config's output path")
    chainwalk.add_argument("--seed", type=int, help="override the base seed")

    solve = sub.add_parser(
        "solve", help="run the penalized solver on a dataset dump"
    )
    solve.add_argument("--data", required=True, help="dataset dump path")
    solve.add_argument("--mu", type=float, help="penalty weight")
    solve.add_argument("--tau", type=float, default=1.0, help="concavity index")
    solve.add_argument(
        "--q", default="auto",
        help="debiasing subspace dimension, an integer or 'auto'",
    )
    solve.add_argument(
        "--ridge", type=float,
        help="solve the closed-form ridge baseline instead",
    )
    solve.add_argument("--tol", type=float, default=1e-8)
    solve.add_argument("--max-iters", type=int, default=100_000)
    solve.add_argument("--out", help="write the weight vector to this file")

    exact = sub.add_parser("exact", help="print V*, Q*, and the optimal policy")
    exact.add_argument("--n-states", type=int, default=20)
    exact.add_argument("--gamma", type=float, default=0.9)
    exact.add_argument("--success-prob", type=float, default=0.9)

    validate = sub.add_parser(
        "validate", help="check a config and report derived solver parameters"
    )
    validate.add_argument("--config", required=True, help="config file path")
    validate.add_argument("--seed", type=int, help="override the base seed")
    return parser


def _cmd_chainwalk(args) -> int:
    config = load_config(args.config)
    if args.out is not None:
        config = replace(config, out=args.out)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    rows = run_sweep(config)
    print(f"wrote {len(rows)} rows to {config.out}")
    return 0


def _cmd_solve(args) -> int:
    data = load_dataset(args.data)
    op_data = assemble_operator(data)
    if args.ridge is not None:
        w = lstd_closed_form(op_data, args.ridge)
        print(f"closed-form solve: ridge={args.ridge}")
    else:
        if args.mu is None:
            raise ValueError("--mu is required unless --ridge is given")
        q = op_data.rank if args.q == "auto" else int(args.q)
        config = default_config(
            op_data, args.mu, args.tau, q,
            tolerance=args.tol, max_iterations=args.max_iters,
        )
        report = solve_assembled(op_data, config)
        w = report.x
        print(
            f"solver: converged={report.converged} "
            f"iterations={report.iterations} "
            f"residual={report.residual_history[-1]:.3e}"
        )
    nnz = int(np.count_nonzero(w))
    print(f"weights: dim={w.shape[0]} nonzeros={nnz} norm={np.linalg.norm(w):.6g}")
    if args.out:
        np.savetxt(args.out, w)
        print(f"wrote weights to {args.out}")
    else:
        for value in w:
            print(repr(float(value)))
    return 0


def _cmd_exact(args) -> int:
    model = ChainMdpModel(
        n_states=args.n_states,
        success_prob=args.success_prob,
        gamma=args.gamma,
    )
    solution = exact_optimal(model)
    # Internal tables use the cost convention; print in reward sense.
    q = -solution.q_values
    v = -solution.v_values
    print(f"chain model: n_states={model.n_states} "
          f"success_prob={model.success_prob} gamma={model.gamma}")
    print("state  V*          Q*(left)    Q*(right)   policy")
    for s in range(model.n_states):
        name = ACTION_NAMES[solution.policy[s]]
        print(
            f"{s + 1:>5}  {v[s]:<10.6f}  {q[s, 0]:<10.6f}  "
            f"{q[s, 1]:<10.6f}  {name}"
        )
    return 0


def _cmd_validate(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    model = ChainMdpModel(gamma=config.gamma)
    star_policy = exact_optimal(model).policy
    sweep_value = config.values[0]
    m, n_noise = _axis_values(config, sweep_value)
    streams = np.random.SeedSequence(config.seed).generate_state(2)
    batch = sample_batch(model, m, int(streams[0]))
    spec = FeatureMapSpec(
        n_rbf=config.n_rbf, n_noise=n_noise,
        n_states=model.n_states, seed=int(streams[1]),
    )
    data = build_lstd_data(spec, batch, star_policy, config.gamma)
    op_data = assemble_operator(data)
    print(f"config ok: {args.config}")
    print(
        f"probe dataset: sweep_value={sweep_value} m={m} n={spec.dim} "
        f"rank={op_data.rank} ||A||_2={op_data.spectral_norm:.6g} "
        f"lambda_min^++={op_data.lambda_min_pos:.6g}"
    )
    failures = 0
    for method in config.methods:
        if method in ("lstd", "ridge"):
            print(f"{method}: closed form (no step parameters)")
            continue
        for params in _method_grid(config, method):
            q = op_data.rank if params.get("q", 0) == "auto" else int(params.get("q", 0))
            tau = params.get("tau", 1.0)
            label = _hyperparams_string(method, params)
            try:
                solver_config = default_config(op_data, params["mu"], tau, q)
            except ValueError as exc:
                print(f"{method} [{label}]: INADMISSIBLE ({exc})")
                failures += 1
                continue
            beta = solver_config.alpha * (
                op_data.spectral_norm + solver_config.mu / solver_config.tau
            ) + 1.0
            print(
                f"{method} [{label}]: alpha={solver_config.alpha:.6g} "
                f"beta={beta:.6g} epsilon={solver_config.epsilon:.6g} "
                f"eta={solver_config.eta:.6g}"
            )
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "chainwalk": _cmd_chainwalk,
        "solve": _cmd_solve,
        "exact": _cmd_exact,
        "validate": _cmd_validate,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, ValueError, DivergenceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
