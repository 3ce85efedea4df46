"""
Model file loading/saving and result file serialization
"""
import hashlib
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import ValidationError

from app import __version__
from app.decomposition.networks import Network
from app.schemas.file_schemas import (
    FORMAT_VERSION,
    ArrayPayload,
    FeedforwardLayerFile,
    GcnLayerFile,
    ModelFile,
    Provenance,
    ResultFile,
    TensorLayerFile,
)
from app.schemas.network_schemas import (
    ActivationPattern,
    FeedforwardLayer,
    FeedforwardNetwork,
    GcnLayer,
    GcnNetwork,
    HalfSpace,
    LocalLinearModel,
    RegionDescription,
    TensorLayer,
    TensorNetwork,
)
from app.schemas.result_schemas import (
    Attribution,
    MrtLeaf,
    MrtNode,
    MrtSplit,
    MultivariateRegressionTree,
    RegionCensus,
)
from app.utils.errors import (
    InputError,
    ModelParseError,
    ModelValueError,
    ModelVersionError,
    ShapeError,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _location(error: ValidationError, prefix: str = "") -> str:
    first = error.errors()[0]
    parts = [prefix] if prefix else []
    for part in first["loc"]:
        if isinstance(part, int):
            parts[-1:] = [f"{parts[-1] if parts else ''}[{part}]"]
        else:
            parts.append(str(part))
    return ".".join(parts) + f": {first['msg']}"


def _array(payload: ArrayPayload, path: str) -> np.ndarray:
    try:
        array = np.array(payload.data, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ModelParseError(f"{path}: data is not a rectangular numeric array ({exc})", field=path) from exc
    if list(array.shape) != payload.shape:
        raise ShapeError(
            f"{path}: declared shape {payload.shape} but data has shape {list(array.shape)}",
            field=path,
            expected=payload.shape,
            actual=list(array.shape),
        )
    if not np.all(np.isfinite(array)):
        raise ModelValueError(f"{path}: contains NaN or Inf entries", field=path)
    return array


def _layer(raw: Dict[str, Any], schema, path: str):
    try:
        return schema.model_validate(raw)
    except ValidationError as exc:
        raise ModelParseError(_location(exc, path), field=path) from exc


def _build(factory, path: str, **fields):
    """Construct a layer, re-raising shape errors with the layer path in front"""
    try:
        return factory(**fields)
    except ShapeError as exc:
        context = dict(exc.context)
        field = context.pop("field", None)
        location = f"{path}.{field}" if field else path
        raise ShapeError(f"{location}: {exc.detail}", field=location, **context) from exc


def model_from_dict(document: Dict[str, Any]) -> Network:
    """Validate a parsed model document and build the network"""
    try:
        model_file = ModelFile.model_validate(document)
    except ValidationError as exc:
        raise ModelParseError(_location(exc)) from exc

    major = model_file.format_version.split(".")[0]
    if major != FORMAT_VERSION.split(".")[0]:
        raise ModelVersionError(
            f"unsupported format_version {model_file.format_version!r}; expected {FORMAT_VERSION}",
            expected=FORMAT_VERSION,
            actual=model_file.format_version,
        )

    layers = []
    for index, raw in enumerate(model_file.layers):
        path = f"layers[{index}]"
        if model_file.family == "feedforward":
            layer = _layer(raw, FeedforwardLayerFile, path)
            weight, bias = _array(layer.weight, f"{path}.weight"), _array(layer.bias, f"{path}.bias")
            layers.append(_build(FeedforwardLayer, path, weight=weight, bias=bias))
        elif model_file.family == "gcn":
            layer = _layer(raw, GcnLayerFile, path)
            arrays = {name: _array(getattr(layer, name), f"{path}.{name}") for name in ("operator", "weight", "bias")}
            layers.append(_build(GcnLayer, path, **arrays))
        else:
            layer = _layer(raw, TensorLayerFile, path)
            modes = tuple(_array(mode, f"{path}.modes[{i}]") for i, mode in enumerate(layer.modes))
            layers.append(_build(TensorLayer, path, modes=modes, bias=_array(layer.bias, f"{path}.bias")))

    if model_file.family == "feedforward":
        return FeedforwardNetwork(layers=tuple(layers))
    if model_file.family == "gcn":
        return GcnNetwork(layers=tuple(layers))
    return TensorNetwork(layers=tuple(layers))


def load_model(path: PathLike) -> Network:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ModelParseError(f"cannot read model file {path}: {exc.strerror}", path=str(path)) from exc
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelParseError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", path=str(path)
        ) from exc
    net = model_from_dict(document)
    logger.info("loaded %s model from %s", net.family, path)
    return net


def _payload(array: np.ndarray) -> Dict[str, Any]:
    return {"shape": list(array.shape), "data": array.tolist()}


def model_to_dict(net: Network, metadata: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    if isinstance(net, FeedforwardNetwork):
        layers = [{"weight": _payload(l.weight), "bias": _payload(l.bias)} for l in net.layers]
    elif isinstance(net, GcnNetwork):
        layers = [
            {"operator": _payload(l.operator), "weight": _payload(l.weight), "bias": _payload(l.bias)}
            for l in net.layers
        ]
    elif isinstance(net, TensorNetwork):
        layers = [{"modes": [_payload(a) for a in l.modes], "bias": _payload(l.bias)} for l in net.layers]
    else:
        raise InputError(f"unsupported network type {type(net).__name__}")
    return {
        "format_version": FORMAT_VERSION,
        "family": net.family,
        "layers": layers,
        "metadata": metadata or {},
    }


def save_model(net: Network, path: PathLike, metadata: Optional[Dict[str, Any]] = None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(net, metadata), indent=2) + "\n")


def model_hash(path: PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# Result files
def make_result(
    kind: str,
    payload: Dict[str, Any],
    model_hash: Optional[str] = None,
    input: Any = None,
    seed: Optional[int] = None,
) -> ResultFile:
    return ResultFile(
        kind=kind,
        payload=payload,
        provenance=Provenance(
            model_hash=model_hash,
            input=input,
            seed=seed,
            tool_version=__version__,
            created_at=datetime.now(),
        ),
    )


def dump_result(result: ResultFile) -> str:
    return json.dumps(result.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def parse_result(text: str) -> ResultFile:
    try:
        return ResultFile.model_validate_json(text)
    except ValidationError as exc:
        raise ModelParseError(_location(exc)) from exc


# Payload codecs
def pattern_payload(pattern: ActivationPattern) -> List[Any]:
    return pattern.to_lists()


def pattern_from_payload(payload: List[Any]) -> ActivationPattern:
    return ActivationPattern(per_layer=tuple(np.array(mask, dtype=np.int8) for mask in payload))


def linear_model_payload(model: LocalLinearModel) -> Dict[str, Any]:
    return {
        "weight": model.weight.tolist(),
        "bias": model.bias.tolist(),
        "pattern": pattern_payload(model.pattern),
    }


def linear_model_from_payload(payload: Dict[str, Any]) -> LocalLinearModel:
    return LocalLinearModel(
        weight=payload["weight"],
        bias=payload["bias"],
        pattern=pattern_from_payload(payload["pattern"]),
    )


def region_payload(region: RegionDescription) -> Dict[str, Any]:
    return {
        "pattern": pattern_payload(region.pattern),
        "input_dim": region.input_dim,
        "halfspaces": [
            {
                "layer": layer,
                "neuron": neuron,
                "normal": h.normal.tolist(),
                "offset": h.offset,
                "degenerate": h.degenerate,
                "inclusive": h.inclusive,
            }
            for h, (layer, neuron) in zip(region.halfspaces, region.neurons)
        ],
    }


def region_from_payload(payload: Dict[str, Any]) -> RegionDescription:
    halfspaces = payload["halfspaces"]
    return RegionDescription(
        halfspaces=tuple(
            HalfSpace(normal=h["normal"], offset=h["offset"], inclusive=h.get("inclusive", False))
            for h in halfspaces
        ),
        neurons=tuple((h["layer"], h["neuron"]) for h in halfspaces),
        pattern=pattern_from_payload(payload["pattern"]),
        input_dim=payload.get("input_dim"),
    )


def tree_payload(tree: MultivariateRegressionTree) -> Dict[str, Any]:
    def node_payload(node: MrtNode) -> Dict[str, Any]:
        if isinstance(node, MrtLeaf):
            return {"leaf": linear_model_payload(node.model), "feasible": node.feasible}
        return {
            "layer": node.layer,
            "neuron": node.neuron,
            "normal": node.condition.normal.tolist(),
            "offset": node.condition.offset,
            "true": node_payload(node.true_child),
            "false": node_payload(node.false_child),
        }

    return {"input_dim": tree.input_dim, "output_dim": tree.output_dim, "root": node_payload(tree.root)}


def tree_from_payload(payload: Dict[str, Any]) -> MultivariateRegressionTree:
    def node_from(raw: Dict[str, Any]) -> MrtNode:
        if "leaf" in raw:
            return MrtLeaf(model=linear_model_from_payload(raw["leaf"]), feasible=raw.get("feasible"))
        return MrtSplit(
            layer=raw["layer"],
            neuron=raw["neuron"],
            condition=HalfSpace(normal=raw["normal"], offset=raw["offset"]),
            true_child=node_from(raw["true"]),
            false_child=node_from(raw["false"]),
        )

    return MultivariateRegressionTree(
        root=node_from(payload["root"]), input_dim=payload["input_dim"], output_dim=payload["output_dim"]
    )


def attribution_payload(attribution: Attribution) -> Dict[str, Any]:
    return {
        "values": attribution.values.tolist(),
        "input": attribution.input.tolist(),
        "baseline": attribution.baseline.tolist(),
        "mode": attribution.mode,
        "approximate": attribution.approximate,
        "stats": attribution.stats,
    }


def attribution_from_payload(payload: Dict[str, Any]) -> Attribution:
    return Attribution(**payload)


def census_payload(census: RegionCensus) -> Dict[str, Any]:
    return {
        "strategy": census.strategy,
        "count": len(census.regions),
        "lp_solves": census.lp_solves,
        "rejected_witnesses": census.rejected_witnesses,
        "regions": [
            {"pattern": pattern_payload(r.pattern), "witness": r.witness.tolist()} for r in census.regions
        ],
    }
