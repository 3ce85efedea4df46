"""
Handler for the shap subcommand
"""
from argparse import Namespace
from typing import Tuple

import numpy as np

from app.commands.inputs import parse_array
from app.decomposition.networks import as_feedforward, forward_batch
from app.decomposition.shap import shap_bruteforce, shap_global, shap_local
from app.utils.model_io import attribution_payload, dump_result, load_model, make_result, model_hash


def handle_shap(args: Namespace) -> Tuple[str, int]:
    net = load_model(args.model)
    x = parse_array(args.input, net.input_shape)
    baseline = parse_array(args.baseline, net.input_shape)

    if args.mode == "local":
        attribution = shap_local(net, x, baseline, seed=args.seed)
    elif args.mode == "global":
        attribution = shap_global(net, x, baseline, sample=args.sample, seed=args.seed)
    else:
        attribution = shap_bruteforce(net, x, baseline)

    outputs, _ = forward_batch(as_feedforward(net), np.stack([attribution.input, attribution.baseline]))
    payload = attribution_payload(attribution)
    payload["efficiency_gap"] = (attribution.totals() - (outputs[0] - outputs[1])).tolist()
    result = make_result(
        "attribution",
        payload,
        model_hash(args.model),
        {"input": x.tolist(), "baseline": baseline.tolist()},
        seed=args.seed,
    )
    return dump_result(result), 0
