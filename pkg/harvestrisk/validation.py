"""
Validation utilities for harvestrisk.

These gatekeepers turn raw (JSON-like) descriptions into validated value
types, raising the structured errors of ``harvestrisk.errors`` with the
offending field path.
"""

from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from .errors import (
    AsymmetricWeightsError,
    BadSimplexError,
    DimensionMismatchError,
    DisconnectedGraphError,
    NegativeWeightError,
    NonPositiveOperatorError,
    NonPSDError,
    SchemaError,
    SelfLoopError,
)
from .types import LocationScatterModel, PriorSet, SpatialDomain, as_matrix, as_vector

SIMPLEX_TOLERANCE = 1e-12
SYMMETRY_TOLERANCE = 1e-12
PSD_CLIP = 1e-12

_DOMAIN_VECTORS = ("a_diag", "b_diag", "d_weights", "pi_weights")


def _vector(raw: Mapping[str, Any], key: str, length: int) -> np.ndarray:
    if key not in raw:
        raise SchemaError("field required", field=key)
    try:
        vec = as_vector(raw[key])
    except (TypeError, ValueError) as e:
        raise SchemaError(str(e), field=key) from e
    if vec.shape[0] != length:
        raise DimensionMismatchError(
            f"expected {length} entries, got {vec.shape[0]}", field=key
        )
    if not np.all(np.isfinite(vec)):
        raise SchemaError("entries must be finite", field=key)
    return vec


def validate_simplex(
    weights: np.ndarray, field: str, tolerance: float = SIMPLEX_TOLERANCE
) -> np.ndarray:
    """Check that ``weights`` lies in the probability simplex.

    Raises:
        BadSimplexError: If an entry is not finite, leaves [0, 1] or the sum is not 1.
    """
    if not np.all(np.isfinite(weights)):
        raise BadSimplexError("entries must be finite", field=field)
    if np.any(weights < 0) or np.any(weights > 1):
        raise BadSimplexError("entries must lie in [0, 1]", field=field)
    total = float(np.sum(weights))
    if abs(total - 1.0) > tolerance:
        raise BadSimplexError(
            f"entries must sum to 1 (got {total:.17g})",
            field=field,
            details={"sum": total},
        )
    return weights


def _parse_edges(
    raw_edges: Iterable[Any], n_regions: int
) -> Tuple[Tuple[int, int, float], ...]:
    pairs: Dict[Tuple[int, int], float] = {}
    for idx, edge in enumerate(raw_edges):
        field = f"edges[{idx}]"
        try:
            i, j, w = edge
            i_idx, j_idx, weight = int(i), int(j), float(w)
        except (TypeError, ValueError) as e:
            raise SchemaError("edge must be an [i, j, weight] triple", field=field) from e
        if i_idx != i or j_idx != j:
            raise SchemaError("edge endpoints must be integers", field=field)
        if not (0 <= i_idx < n_regions and 0 <= j_idx < n_regions):
            raise SchemaError(
                f"endpoint out of range 0..{n_regions - 1}", field=field
            )
        if i_idx == j_idx:
            raise SelfLoopError(f"self-loop on region {i_idx}", field=field)
        if not np.isfinite(weight):
            raise SchemaError("weight must be finite", field=field)
        if weight < 0:
            raise NegativeWeightError(
                f"weight {weight} on edge ({i_idx}, {j_idx}) is negative", field=field
            )
        key = (min(i_idx, j_idx), max(i_idx, j_idx))
        if key in pairs and pairs[key] != weight:
            raise AsymmetricWeightsError(
                f"w_{i_idx}{j_idx} = {weight} but w_{j_idx}{i_idx} = {pairs[key]}",
                field=field,
            )
        pairs[key] = weight
    return tuple((i, j, w) for (i, j), w in sorted(pairs.items()))


def domain_graph(domain: SpatialDomain) -> nx.Graph:
    """Weighted undirected graph of the domain; zero-weight edges are dropped."""
    graph = nx.Graph()
    graph.add_nodes_from(range(domain.n_regions))
    graph.add_weighted_edges_from((i, j, w) for i, j, w in domain.edges if w > 0)
    return graph


def validate_domain(raw: Mapping[str, Any]) -> SpatialDomain:
    """
    Validate a raw domain description.

    Args:
        raw: Mapping with ``n_regions``, ``edges`` ([i, j, w] triples, 0-based),
            ``a_diag``, ``b_diag``, ``d_weights`` and ``pi_weights``.

    Returns:
        A validated SpatialDomain with one edge per unordered pair.

    Raises:
        SchemaError: Missing or malformed fields.
        AsymmetricWeightsError, NegativeWeightError, SelfLoopError,
        DisconnectedGraphError, NonPositiveOperatorError, BadSimplexError.
    """
    if not isinstance(raw, Mapping):
        raise SchemaError("domain must be a mapping")
    unknown = set(raw) - {"n_regions", "edges", *_DOMAIN_VECTORS}
    if unknown:
        raise SchemaError("unknown field", field=sorted(unknown)[0])
    if "n_regions" not in raw:
        raise SchemaError("field required", field="n_regions")
    n_raw = raw["n_regions"]
    if isinstance(n_raw, bool) or not isinstance(n_raw, (int, np.integer)) or n_raw < 1:
        raise SchemaError("must be a positive integer", field="n_regions")
    n_regions = int(n_raw)

    vectors = {key: _vector(raw, key, n_regions) for key in _DOMAIN_VECTORS}
    edges = _parse_edges(raw.get("edges") or [], n_regions)

    for key in ("b_diag", "d_weights"):
        if np.any(vectors[key] <= 0):
            raise NonPositiveOperatorError("entries must be strictly positive", field=key)
    validate_simplex(vectors["pi_weights"], "pi_weights")

    domain = SpatialDomain(n_regions=n_regions, edges=edges, **vectors)
    graph = domain_graph(domain)
    if not nx.is_connected(graph):
        components = [sorted(c) for c in nx.connected_components(graph)]
        raise DisconnectedGraphError(
            f"graph has {len(components)} connected components",
            field="edges",
            details={"components": components},
        )
    return domain


def validate_model(
    mean: Any,
    scatter: Any,
    family_tag: str = "gaussian",
    psd_clip: float = PSD_CLIP,
) -> LocationScatterModel:
    """
    Validate a Location-Scatter model.

    The scatter is symmetrized; eigenvalues in [-psd_clip, 0) are clipped to 0.

    Raises:
        SchemaError: Malformed arrays.
        DimensionMismatchError: Scatter size differs from the mean length.
        NonPSDError: Scatter asymmetric or with a clearly negative eigenvalue.
    """
    try:
        m = as_vector(mean)
    except (TypeError, ValueError) as e:
        raise SchemaError(str(e), field="mean") from e
    try:
        s = as_matrix(scatter)
    except (TypeError, ValueError) as e:
        raise SchemaError(str(e), field="scatter") from e
    if s.shape[0] != m.shape[0]:
        raise DimensionMismatchError(
            f"scatter is {s.shape[0]}x{s.shape[0]} but mean has {m.shape[0]} entries",
            field="scatter",
        )
    if not np.all(np.isfinite(m)):
        raise SchemaError("entries must be finite", field="mean")
    if not np.all(np.isfinite(s)):
        raise SchemaError("entries must be finite", field="scatter")

    scale = max(1.0, float(np.max(np.abs(s))) if s.size else 1.0)
    if np.max(np.abs(s - s.T)) > SYMMETRY_TOLERANCE * scale:
        raise NonPSDError("scatter is not symmetric", field="scatter")
    sym = 0.5 * (s + s.T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    if eigvals[0] < -psd_clip * scale:
        raise NonPSDError(
            f"scatter has negative eigenvalue {eigvals[0]:.3e}", field="scatter"
        )
    if eigvals[0] < 0:
        sym = (eigvecs * np.clip(eigvals, 0.0, None)) @ eigvecs.T
        sym = 0.5 * (sym + sym.T)
    return LocationScatterModel(mean=m, scatter=sym, family_tag=family_tag)


def validate_priors(
    raw: Union[Sequence[Mapping[str, Any]], Mapping[str, Any]],
    dimension: Optional[int] = None,
    psd_clip: float = PSD_CLIP,
) -> PriorSet:
    """
    Validate a prior set given as ``{"models": [...]}`` or a bare list of
    ``{"mean", "scatter", "weight"}`` entries.

    Args:
        raw: Raw prior description.
        dimension: Expected model dimension (number of regions), if known.
        psd_clip: Clipping threshold for slightly negative scatter eigenvalues.

    Returns:
        Validated PriorSet.

    Raises:
        SchemaError, DimensionMismatchError, NonPSDError, BadSimplexError.
    """
    if isinstance(raw, Mapping):
        unknown = set(raw) - {"models"}
        if unknown:
            raise SchemaError("unknown field", field=sorted(unknown)[0])
        entries = raw.get("models")
    else:
        entries = raw
    if not isinstance(entries, Sequence) or isinstance(entries, (str, bytes)):
        raise SchemaError("expected a list of prior models", field="models")
    if not entries:
        raise SchemaError("at least one prior model is required", field="models")

    models: List[LocationScatterModel] = []
    weights: List[float] = []
    for idx, entry in enumerate(entries):
        prefix = f"models[{idx}]"
        if not isinstance(entry, Mapping):
            raise SchemaError("expected a mapping", field=prefix)
        unknown = set(entry) - {"mean", "scatter", "weight", "family_tag"}
        if unknown:
            raise SchemaError("unknown field", field=f"{prefix}.{sorted(unknown)[0]}")
        for key in ("mean", "scatter", "weight"):
            if key not in entry:
                raise SchemaError("field required", field=f"{prefix}.{key}")
        try:
            model = validate_model(
                entry["mean"], entry["scatter"], entry.get("family_tag", "gaussian"), psd_clip
            )
        except (SchemaError, DimensionMismatchError, NonPSDError) as e:
            raise e.with_prefix(prefix)
        expected = dimension if dimension is not None else (
            models[0].dimension if models else model.dimension
        )
        if model.dimension != expected:
            raise DimensionMismatchError(
                f"model has dimension {model.dimension}, expected {expected}",
                field=f"{prefix}.mean",
            )
        try:
            weights.append(float(entry["weight"]))
        except (TypeError, ValueError) as e:
            raise SchemaError("weight must be a number", field=f"{prefix}.weight") from e
        models.append(model)

    w = as_vector(weights)
    validate_simplex(w, "weights")
    return PriorSet(models=tuple(models), weights=w)
