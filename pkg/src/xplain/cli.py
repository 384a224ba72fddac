"""Command-line entry point.

Subcommands: gen, train, predict, cf, edges, tree, attribute, verify, serve.
Exit codes: 0 success, 1 domain error, 2 usage error. All randomness flows
through --seed, and outputs are byte-identical for identical argv + seed
(timing fields are never written to files).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .attribution import (ABLATION, OCCLUSION, PERMUTATION, SHAPLEY, Explainer,
                          bind_background, explain, map_to_json)
from .bench import BenchmarkSpec, generate, write_benchmark
from .counterfactual import (CounterfactualQuery, query_from_dict,
                             search_exhaustive, search_sampling)
from .dataset import load_dataset
from .edge_cases import EdgeCriterion, RiskFunction, mine_edge_cases
from .errors import XplainError
from .models import model_from_json, train_model
from .schema import instance_from_payload
from .tree import collapse_to_depth, frontier, superleaf_summary
from .verifiability import verifiability_study

EXPLAINER_ALIASES = {
    "ablation": ABLATION,
    "occlusion": OCCLUSION,
    "shapley": SHAPLEY,
    "permutation": PERMUTATION,
}


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _emit(text: str, out: str | None, quiet: bool) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
        if not quiet:
            print(out)
    else:
        sys.stdout.write(text)


def _load_model(path: str):
    return model_from_json(Path(path).read_text(encoding="utf-8"))


def _load_data(data_path: str, schema_path: str):
    return load_dataset(Path(data_path).read_bytes(),
                        Path(schema_path).read_bytes())


def _load_instance(schema, path: str):
    return instance_from_payload(schema, json.loads(Path(path).read_text()))


def _resolve_explainers(names: str) -> list[str]:
    kinds = []
    for raw in names.split(","):
        name = raw.strip()
        if not name:
            continue
        kinds.append(EXPLAINER_ALIASES.get(name, name))
    return kinds


def cmd_gen(args) -> int:
    spec = BenchmarkSpec(
        n_instances=args.n, n_informative=args.informative, n_noise=args.noise,
        n_spurious=args.spurious, n_classes=args.classes,
        rare_fraction=args.rare_fraction, rare_risk=args.rare_risk,
        label_noise=args.label_noise, spurious_strength=args.spurious_strength,
        seed=args.seed)
    data, risk = generate(spec)
    paths = write_benchmark(data, risk, args.out)
    if not args.quiet:
        for p in paths.values():
            print(p)
    return 0


def cmd_train(args) -> int:
    data = _load_data(args.data, args.schema)
    if args.kind == "cart":
        model = train_model(data, "cart-tree",
                            {"max_depth": args.max_depth, "min_leaf": args.min_leaf,
                             "lam": args.lam}, seed=args.seed)
    else:
        model = train_model(data, "logistic",
                            {"learning_rate": args.lr, "epochs": args.epochs},
                            seed=args.seed)
    _emit(_dump(model.to_dict()), args.out, args.quiet)
    if not args.quiet:
        print(f"training accuracy: {model.training_accuracy:.4f}", file=sys.stderr)
    return 0


def cmd_predict(args) -> int:
    model = _load_model(args.model)
    x = _load_instance(model.schema, args.instance)
    proba = model.predict_proba(x)
    doc = {
        "class": model.schema.classes[model.predict(x)],
        "proba": {c: float(p) for c, p in zip(model.schema.classes, proba)},
    }
    _emit(_dump(doc), args.out, args.quiet)
    return 0


def _parse_ranges(schema, specs):
    ranges = {}
    for spec in specs or []:
        if "=" not in spec:
            raise XplainError(f"bad --range {spec!r}; expected name=lo:hi or "
                              f"name=cat1,cat2")
        name, _, value = spec.partition("=")
        i = schema.feature_index(name.strip())
        feat = schema.features[i]
        if feat.is_numeric:
            lo, _, hi = value.partition(":")
            ranges[i] = (float(lo), float(hi))
        else:
            ranges[i] = tuple(c.strip() for c in value.split(","))
    return ranges


def cmd_cf(args) -> int:
    model = _load_model(args.model)
    schema = model.schema
    raw = json.loads(Path(args.instance).read_text())
    if isinstance(raw, dict) and "instance" in raw:
        # a full query document; flags below override its fields
        doc = dict(raw)
    else:
        doc = {"instance": raw}
    doc["target_class"] = args.target
    if args.lock:
        doc["lock"] = args.lock
    if args.force_change:
        doc["force_change"] = args.force_change
    if args.range:
        doc["ranges"] = {}
    if args.epsilon is not None:
        doc["epsilon"] = args.epsilon
    if args.max_results is not None:
        doc["max_results"] = args.max_results
    if args.time_budget_ms is not None:
        doc["time_budget_ms"] = args.time_budget_ms
    q = query_from_dict(schema, doc)
    if args.range:
        q = CounterfactualQuery(
            x=q.x, target_class=q.target_class, epsilon=q.epsilon,
            unchangeable=q.unchangeable, must_change=q.must_change,
            ranges=_parse_ranges(schema, args.range), max_results=q.max_results,
            time_budget_ms=q.time_budget_ms)
        q.validate(schema)
    if args.engine == "exact":
        out = search_exhaustive(model, q, grid_steps=args.grid_steps)
    else:
        out = search_sampling(model, q, seed=args.seed, budget=args.budget)
    _emit(_dump(out.to_dict()), args.out, args.quiet)
    return 0


def cmd_edges(args) -> int:
    model = _load_model(args.model)
    data = _load_data(args.data, args.schema)
    risk = RiskFunction.from_dict(model.schema,
                                  json.loads(Path(args.risk).read_text()))
    crit = EdgeCriterion(risk_threshold=args.threshold,
                         require_misprediction=not args.no_require_misprediction)
    out = mine_edge_cases(model, data, risk, crit, bins=args.bins)
    if args.format == "csv":
        _emit(out.to_csv(), args.out, args.quiet)
    else:
        _emit(_dump(out.to_dict()), args.out, args.quiet)
    return 0


def _render_tree_pretty(tree, view) -> str:
    lines = []

    def walk(nid: int, indent: int) -> None:
        node = tree.nodes[nid]
        pad = "  " * indent
        if nid in view.expanded:
            feat = tree.schema.features[node.split.feature]
            if node.split.threshold is not None:
                rule = f"{feat.name} <= {node.split.threshold:g}"
            else:
                rule = f"{feat.name} in {list(node.split.categories)}"
            lines.append(f"{pad}#{nid} n={node.n_support} [{rule}]")
            for child in node.children:
                walk(child, indent + 1)
        elif node.is_leaf:
            s = superleaf_summary(tree, nid)
            lines.append(f"{pad}#{nid} n={node.n_support} leaf {s.label} "
                         f"{dict(s.cluster)}")
        else:
            s = superleaf_summary(tree, nid)
            lines.append(f"{pad}#{nid} n={node.n_support} ⊕ {s.label} "
                         f"{dict(s.cluster)} leaves={s.subtree_leaves}")

    walk(tree.root, 0)
    return "\n".join(lines) + "\n"


def cmd_tree(args) -> int:
    model = _load_model(args.model)
    if model.kind != "cart-tree":
        raise XplainError("the tree subcommand needs a cart-tree model")
    tree = model.tree
    view = collapse_to_depth(tree, args.depth)
    if args.format == "pretty":
        _emit(_render_tree_pretty(tree, view), args.out, args.quiet)
    else:
        doc = {
            "tree": tree.to_dict(),
            "view": view.to_dict(),
            "superleafs": [superleaf_summary(tree, nid).to_dict()
                           for nid in frontier(tree, view)
                           if not tree.nodes[nid].is_leaf],
        }
        _emit(_dump(doc), args.out, args.quiet)
    return 0


def cmd_attribute(args) -> int:
    model = _load_model(args.model)
    x = _load_instance(model.schema, args.instance)
    kind = EXPLAINER_ALIASES.get(args.explainer, args.explainer)
    explainer = Explainer(kind)
    if args.data and args.schema:
        explainer = bind_background(explainer, _load_data(args.data, args.schema))
    target = model.schema.class_index(args.target) if args.target else None
    out = explain(explainer, model, x, target_class=target, seed=args.seed)
    _emit(map_to_json(model.schema, out) + "\n", args.out, args.quiet)
    return 0


def cmd_verify(args) -> int:
    models = [_load_model(p.strip()) for p in args.models.split(",") if p.strip()]
    data = _load_data(args.data, args.schema)
    explainers = []
    for kind in _resolve_explainers(args.explainers):
        explainers.append(bind_background(Explainer(kind), data))
    report = verifiability_study(models, data, explainers, seed=args.seed)
    if args.format == "csv":
        _emit(report.to_csv(), args.out, args.quiet)
    else:
        _emit(_dump(report.to_dict()), args.out, args.quiet)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    config = ServiceConfig.load(path=args.config, port=args.port,
                                data_dir=args.data_dir,
                                session_ttl_s=args.session_ttl)
    app = create_app(config)
    uvicorn.run(app, host=args.host, port=config.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xplain")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--format", choices=("json", "csv", "pretty"),
                        default="json")
    parser.add_argument("--quiet", action="store_true")

    # the same globals are accepted after the subcommand; SUPPRESS keeps the
    # subparser from clobbering a value given before it
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--format", choices=("json", "csv", "pretty"),
                        default=argparse.SUPPRESS)
    common.add_argument("--quiet", action="store_true",
                        default=argparse.SUPPRESS)

    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=lambda **kw: argparse.ArgumentParser(
                                    parents=[common], **kw))

    p = sub.add_parser("gen", help="generate a synthetic benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--informative", type=int, default=2)
    p.add_argument("--noise", type=int, default=2)
    p.add_argument("--spurious", type=int, default=0)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--rare-fraction", type=float, default=0.0)
    p.add_argument("--rare-risk", type=float, default=10.0)
    p.add_argument("--label-noise", type=float, default=0.0)
    p.add_argument("--spurious-strength", type=float, default=0.8)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="fit a model on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--kind", choices=("cart", "logistic"), default="cart")
    p.add_argument("--out")
    p.add_argument("--max-depth", type=int, default=5)
    p.add_argument("--min-leaf", type=int, default=1)
    p.add_argument("--lam", type=float, default=0.0)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=300)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict one instance")
    p.add_argument("--model", required=True)
    p.add_argument("--instance", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cf", help="search counterfactuals")
    p.add_argument("--model", required=True)
    p.add_argument("--instance", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--lock", action="append")
    p.add_argument("--force-change", action="append")
    p.add_argument("--range", action="append",
                   help="name=lo:hi (numeric) or name=cat1,cat2")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--engine", choices=("sample", "exact"), default="sample")
    p.add_argument("--budget", type=int, default=2000)
    p.add_argument("--grid-steps", type=int, default=11)
    p.add_argument("--max-results", type=int)
    p.add_argument("--time-budget-ms", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cf)

    p = sub.add_parser("edges", help="mine edge cases from a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--risk", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--no-require-misprediction", action="store_true")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_edges)

    p = sub.add_parser("tree", help="render a collapsed tree view")
    p.add_argument("--model", required=True)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--out")
    p.set_defaults(func=cmd_tree)

    p = sub.add_parser("attribute", help="explain one prediction")
    p.add_argument("--model", required=True)
    p.add_argument("--instance", required=True)
    p.add_argument("--explainer", required=True,
                   choices=tuple(EXPLAINER_ALIASES) + tuple(EXPLAINER_ALIASES.values()))
    p.add_argument("--data")
    p.add_argument("--schema")
    p.add_argument("--target")
    p.add_argument("--out")
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("verify", help="run a verifiability study")
    p.add_argument("--models", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--explainers", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--config")
    p.add_argument("--data-dir")
    p.add_argument("--session-ttl", type=float)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except XplainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
