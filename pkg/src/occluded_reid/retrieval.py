"""Embedding extraction and mAP/CMC evaluation under the standard re-identification protocol.

Per query, gallery entries that share both identity and camera with the query
are dropped, as are junk entries. The remaining gallery is ranked by cosine
distance with ties broken by gallery index. AP is the mean of i / r_i over
the matches, where r_i is the 1-based rank of the i-th match. Queries without
any match after filtering are excluded from the means and counted.
"""

import logging
from typing import Optional, Sequence

import numpy as np
import torch

from .encoder import images_to_tensor
from .errors import EvaluationError
from .models import EmbeddingSet, PersonSample, RankingResult, RetrievalMetrics
from .network import ReIDNetwork

logger = logging.getLogger(__name__)

MAX_RANK = 50


def extract_embeddings(
    samples: Sequence[PersonSample],
    network: ReIDNetwork,
    batch_size: int = 64,
) -> EmbeddingSet:
    """Run the supervised branch in eval mode and L2-normalize the retrieval features.

    Identities are the file-name pids so query and gallery labels agree.

    Raises:
        EvaluationError: On an empty sample list or a zero-norm feature
    """
    if len(samples) == 0:
        raise EvaluationError("Cannot extract embeddings from zero samples")

    was_training = network.training
    network.eval()
    chunks = []
    with torch.no_grad():
        for start in range(0, len(samples), batch_size):
            chunk = samples[start : start + batch_size]
            images = images_to_tensor([s.image for s in chunk])
            cameras = torch.tensor([s.camera for s in chunk], dtype=torch.long)
            chunks.append(network.retrieval_features(images, cameras).double().numpy())
    network.train(was_training)

    return EmbeddingSet.from_features(
        np.concatenate(chunks),
        identities=[s.pid for s in samples],
        cameras=[s.camera for s in samples],
        junk=[s.is_junk for s in samples],
    )


def distance_matrix(query: EmbeddingSet, gallery: EmbeddingSet) -> np.ndarray:
    """Q x G cosine distances 1 - q . g of unit vectors, in [0, 2]."""
    return 1.0 - query.features @ gallery.features.T


def rank_gallery(
    query: EmbeddingSet, gallery: EmbeddingSet, distances: Optional[np.ndarray] = None
) -> RankingResult:
    """Filter and sort the gallery for every query."""
    distances = distance_matrix(query, gallery) if distances is None else distances
    if distances.shape != (len(query), len(gallery)):
        raise EvaluationError(
            f"Distance matrix {distances.shape} does not match {len(query)} x {len(gallery)}"
        )

    order, matches = [], []
    for q in range(len(query)):
        same_id = gallery.identities == query.identities[q]
        same_cam = gallery.cameras == query.cameras[q]
        kept = np.flatnonzero(~(same_id & same_cam) & ~gallery.junk)
        ranked = kept[np.argsort(distances[q, kept], kind="stable")]
        order.append(ranked)
        matches.append(same_id[ranked])
    return RankingResult(order=order, matches=matches)


def average_precision(matches: np.ndarray) -> float:
    """mean over matches of (i / r_i); 0 when there is no match."""
    ranks = np.flatnonzero(matches) + 1
    if len(ranks) == 0:
        return 0.0
    return float(np.mean(np.arange(1, len(ranks) + 1) / ranks))


def evaluate(
    query: EmbeddingSet,
    gallery: EmbeddingSet,
    max_rank: int = MAX_RANK,
    distances: Optional[np.ndarray] = None,
) -> RetrievalMetrics:
    """Compute mAP and the CMC curve up to ``max_rank``.

    Raises:
        EvaluationError: If no query has a valid match
    """
    ranking = rank_gallery(query, gallery, distances)

    aps = []
    first_hits = []
    for matches in ranking.matches:
        hits = np.flatnonzero(matches)
        if len(hits) == 0:
            continue
        aps.append(average_precision(matches))
        first_hits.append(int(hits[0]))

    excluded = len(query) - len(aps)
    if not aps:
        raise EvaluationError(f"None of the {len(query)} queries has a valid gallery match")
    if excluded:
        logger.warning(f"{excluded} of {len(query)} queries have no valid match and are excluded")

    first_hits_arr = np.asarray(first_hits)
    cmc = np.array([np.mean(first_hits_arr <= k) for k in range(max_rank)])
    return RetrievalMetrics(
        mean_ap=float(np.mean(aps)),
        cmc=cmc,
        num_queries=len(aps),
        num_excluded=excluded,
    )


def build_report(metrics: RetrievalMetrics, config_digest: str) -> dict:
    """JSON-serializable evaluation report."""
    return {
        "mAP": metrics.mean_ap,
        "rank1": metrics.rank1,
        "rank5": metrics.rank(5),
        "rank10": metrics.rank(10),
        "cmc": [float(v) for v in metrics.cmc],
        "n_queries": metrics.num_queries,
        "n_excluded": metrics.num_excluded,
        "config_digest": config_digest,
    }


def evaluate_network(
    network: ReIDNetwork,
    query: Sequence[PersonSample],
    gallery: Sequence[PersonSample],
) -> RetrievalMetrics:
    """Extract embeddings for both sets and evaluate."""
    return evaluate(extract_embeddings(query, network), extract_embeddings(gallery, network))
