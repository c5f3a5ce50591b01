"""Weight fitting: prediction cross-entropy plus max-margin planning loss.

The prediction loss is a per-actor classification over the K sampled
trajectories, with the class probabilities given by message passing;
its gradient flows analytically through the unrolled, fixed-iteration
propagation (chain rule over the log-domain updates, log-sum-exp
normalizations included). The planning loss is a structured hinge: the
expert trajectory must beat every sampled ego candidate by a margin
that grows with the candidate's distance from the expert and with
flat penalties for dangerous candidates (collision with a ground-truth
future, lane violation).

Collision structures do not depend on the weights, so each scene is
preprocessed once into a cache of features, collision matrices and
margins; epochs then run on dense array math only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import energy as energy_mod
from . import geometry, planner
from .errors import ConfigError, ContractViolation, TrainingDiverged
from .sampler import EGO_SLOT, SamplerConfig, derive_seed, sample_trajectories
from .types import Trajectory, TrajectorySet


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 1.0  # prediction-loss weight; 0 disables that term
    lr: float = 0.05
    epochs: int = 20
    batch_size: int = 8
    k_train: int = 100
    seed: int = 0
    grad_check: bool = False
    gamma: float = 3.0
    collision_lambda: float = 40.0
    learn_gamma: bool = False
    freeze_marginals: bool = False  # planning loss treats marginals as constants
    bp_iters: int = 5
    penalty_collision: float = 2.0
    penalty_lane: float = 2.0
    momentum: float = 0.0

    def validate(self):
        if self.alpha < 0.0:
            raise ConfigError("alpha must be >= 0")
        if self.lr <= 0.0:
            raise ConfigError("lr must be > 0")
        if self.epochs < 0 or self.batch_size < 1 or self.k_train < 1 or self.bp_iters < 1:
            raise ConfigError("epochs/batch_size/k_train/bp_iters out of range")
        if self.gamma < 0.0 or self.collision_lambda < 0.0:
            raise ConfigError("gamma and lambda must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")


@dataclass
class TrainReport:
    epochs: int
    loss_total: tuple
    loss_prediction: tuple
    loss_planning: tuple
    energy_weights: energy_mod.EnergyWeights
    planner_weights: planner.PlannerWeights
    grad_check_max_rel_error: float = None
    diverged: bool = False

    def __post_init__(self):
        if not (len(self.loss_total) == len(self.loss_prediction) == len(self.loss_planning) == self.epochs):
            raise ContractViolation("loss curves must have one entry per epoch")

    def to_json_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "loss_total": [float(v) for v in self.loss_total],
            "loss_prediction": [float(v) for v in self.loss_prediction],
            "loss_planning": [float(v) for v in self.loss_planning],
            "grad_check_max_rel_error": self.grad_check_max_rel_error,
            "diverged": self.diverged,
        }


def prediction_target(gt_future: Trajectory, samples: TrajectorySet) -> int:
    """Index of the sample closest to ground truth (summed waypoint L2)."""
    if len(samples) == 0:
        raise ContractViolation("empty trajectory set")
    diff = samples.waypoints[:, :, :2] - gt_future.waypoints[None, :, :2]
    dist = np.hypot(diff[:, :, 0], diff[:, :, 1]).sum(axis=1)
    return int(np.argmin(dist))


def prediction_loss(marginals, targets) -> float:
    """Mean over actors of -log p(target sample)."""
    marginals = np.asarray(marginals, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if marginals.shape[0] != targets.shape[0]:
        raise ContractViolation("one target per actor required")
    if targets.shape[0] == 0:
        return 0.0
    p = marginals[np.arange(len(targets)), targets]
    out = float(-np.mean(np.log(p)))
    if not np.isfinite(out):
        raise ContractViolation("non-finite prediction loss")
    return out


def planning_loss(sample_costs, gt_cost, distances_to_expert, penalties) -> float:
    """Structured hinge: max_k relu(C(gt) - C(sample k) + d_k + penalty_k)."""
    c = np.asarray(sample_costs, dtype=np.float64)
    d = np.asarray(distances_to_expert, dtype=np.float64)
    pen = np.asarray(penalties, dtype=np.float64)
    if not (c.shape == d.shape == pen.shape):
        raise ContractViolation("sample costs, distances and penalties must align")
    return float(max(0.0, np.max(gt_cost - c + d + pen)))


def gt_cost(scene, weights: planner.PlannerWeights, marginals, actor_sets) -> float:
    """Expert trajectory priced through the same pipeline as ego samples."""
    if scene.expert is None:
        raise ContractViolation("scene has no expert trajectory")
    gt_set = TrajectorySet(scene.expert.waypoints[None], [scene.expert.mode])
    feats = planner.compute_ego_features(scene, gt_set)
    footprints = [a.footprint for a in scene.actors]
    coll = planner.collision_cost_vector(
        gt_set, scene.ego_footprint, marginals, actor_sets, footprints, weights.collision_lambda
    )
    return float(feats[0] @ weights.traj_cost_feature_weights + coll[0])


# ---------------------------------------------------------------------------
# Unrolled message passing with a gradient tape.


def _bp_forward(log_phi, directed, iters, pair_factor):
    """Fixed-iteration propagation recording intermediates for the backward pass."""
    n, k = log_phi.shape
    msgs = np.full((len(directed), k), -np.log(k))
    tape = []
    for _ in range(iters):
        if not directed:
            break
        incoming = np.zeros((n, k))
        for idx, (_, dst, _) in enumerate(directed):
            incoming[dst] += msgs[idx]
        b_all = np.empty_like(msgs)
        mlin_all = np.empty_like(msgs)
        new = np.empty_like(msgs)
        for idx, (src, dst, mat_t) in enumerate(directed):
            pre = log_phi[src] + incoming[src] - msgs[idx ^ 1]
            shift = pre.max()
            b = np.exp(pre - shift)
            masked = mat_t @ b
            mlin = b.sum() - (1.0 - pair_factor) * masked
            b_all[idx] = b
            mlin_all[idx] = mlin
            new[idx] = shift + np.log(mlin)
        norm = new - _lse_rows(new)
        tape.append((msgs, b_all, mlin_all, norm))
        msgs = norm
    log_m = log_phi.copy()
    for idx, (_, dst, _) in enumerate(directed):
        log_m[dst] += msgs[idx]
    log_p = log_m - _lse_rows(log_m)
    return log_p, (tape, msgs, log_p)


def _lse_rows(a):
    m = a.max(axis=-1, keepdims=True)
    return m + np.log(np.exp(a - m).sum(axis=-1, keepdims=True))


def _bp_backward(g_log_p, log_phi, directed, pair_factor, state):
    """Vector-Jacobian product of the forward unroll.

    Returns (d_log_phi, d_pair_factor) for upstream gradient g_log_p on
    the log-marginals.
    """
    tape, msgs_final, log_p = state
    n, k = log_phi.shape
    p = np.exp(log_p)
    d_log_m = g_log_p - p * g_log_p.sum(axis=1, keepdims=True)
    d_log_phi = d_log_m.copy()
    d_msgs = np.zeros((len(directed), k))
    for idx, (_, dst, _) in enumerate(directed):
        d_msgs[idx] += d_log_m[dst]
    d_pf = 0.0
    for msgs_prev, b_all, mlin_all, norm in reversed(tape):
        d_new = d_msgs - np.exp(norm) * d_msgs.sum(axis=1, keepdims=True)
        d_msgs = np.zeros_like(d_msgs)
        d_incoming = np.zeros((n, k))
        for idx, (src, dst, mat_t) in enumerate(directed):
            d_mlin = d_new[idx] / mlin_all[idx]
            masked_grad = -(1.0 - pair_factor) * d_mlin
            d_pf += float((mat_t @ b_all[idx]) @ d_mlin)
            d_b = d_mlin.sum() + mat_t.T @ masked_grad
            d_pre = d_b * b_all[idx]
            d_log_phi[src] += d_pre
            d_incoming[src] += d_pre
            d_msgs[idx ^ 1] -= d_pre
        for idx, (_, dst, _) in enumerate(directed):
            d_msgs[idx] += d_incoming[dst]
    return d_log_phi, d_pf


def _directed_edges(edges):
    out = []
    for (i, j), mat in zip(edges.pairs, edges.matrices):
        m = mat.astype(np.float64)
        out.append((i, j, m.T))
        out.append((j, i, m))
    return out


# ---------------------------------------------------------------------------
# Per-scene preprocessing and the differentiable loss.


@dataclass
class SceneCache:
    features: np.ndarray  # (N, K, F_unary)
    directed: list
    ego_feats: np.ndarray  # (K, F_plan)
    gt_feats: np.ndarray  # (F_plan,)
    hits: list  # per actor: (K_ego, K_i) float 0/1
    gt_hits: list  # per actor: (K_i,) float 0/1
    margins: np.ndarray  # (K,) mean L2 distance to expert
    penalties: np.ndarray  # (K,)
    targets: np.ndarray  # (N,) int


def build_scene_cache(scene, cfg: TrainConfig) -> SceneCache:
    n = len(scene.actors)
    sets = []
    feats = []
    for i, actor in enumerate(scene.actors):
        sc = SamplerConfig(
            num_samples=cfg.k_train, rng_seed=derive_seed(cfg.seed, scene.scene_id, i)
        )
        tset = sample_trajectories(actor.state, sc, scene.grid)
        sets.append(tset)
        feats.append(energy_mod.compute_feature_matrix(scene, i, tset)[0])
    footprints = [a.footprint for a in scene.actors]
    edges = energy_mod.build_collision_edges(sets, footprints) if n else energy_mod.CollisionEdges(0, (), ())

    ego_cfg = SamplerConfig(
        num_samples=cfg.k_train, rng_seed=derive_seed(cfg.seed, scene.scene_id, EGO_SLOT)
    )
    ego_set = sample_trajectories(scene.ego_state, ego_cfg, scene.grid)
    ego_feats = planner.compute_ego_features(scene, ego_set)
    gt_set = TrajectorySet(scene.expert.waypoints[None], [scene.expert.mode])
    gt_feats = planner.compute_ego_features(scene, gt_set)[0]

    hits = []
    gt_hits = []
    for i in range(n):
        hits.append(
            (geometry.cross_first_hit(ego_set, scene.ego_footprint, sets[i], footprints[i]) >= 0).astype(np.float64)
        )
        gt_hits.append(
            (geometry.cross_first_hit(gt_set, scene.ego_footprint, sets[i], footprints[i])[0] >= 0).astype(np.float64)
        )

    diff = ego_set.waypoints[:, 1:, :2] - scene.expert.waypoints[None, 1:, :2]
    margins = np.hypot(diff[:, :, 0], diff[:, :, 1]).mean(axis=1)
    pen = np.zeros(len(ego_set))
    for i, actor in enumerate(scene.actors):
        hit = geometry.cross_first_hit(
            ego_set,
            scene.ego_footprint,
            TrajectorySet(actor.gt_future.waypoints[None], [actor.gt_future.mode]),
            actor.footprint,
        )[:, 0]
        pen += cfg.penalty_collision * (hit >= 0)
        pen = np.minimum(pen, cfg.penalty_collision)  # one flat collision penalty
    lane_hit = geometry.lane_violation_first_hit(
        ego_set.waypoints, scene.ego_footprint, scene.route_lanes()
    )
    pen += cfg.penalty_lane * (lane_hit >= 0)

    targets = np.array(
        [prediction_target(scene.actors[i].gt_future, sets[i]) for i in range(n)], dtype=np.int64
    )
    return SceneCache(
        features=np.stack(feats) if feats else np.zeros((0, cfg.k_train, energy_mod.NUM_FEATURES)),
        directed=_directed_edges(edges),
        ego_feats=ego_feats,
        gt_feats=gt_feats,
        hits=hits,
        gt_hits=gt_hits,
        margins=margins,
        penalties=pen,
        targets=targets,
    )


def _scene_loss_grad(cache: SceneCache, w, v, gamma, cfg: TrainConfig):
    """Loss terms and gradients for one scene.

    Returns (pred_loss, plan_loss, d_w, d_v, d_gamma). Gradients are of
    plan_loss + alpha * pred_loss for this scene alone.
    """
    n, k, _ = cache.features.shape
    pair_factor = float(np.exp(-2.0 * gamma))
    unary = cache.features @ w
    log_p, state = _bp_forward(-unary, cache.directed, cfg.bp_iters, pair_factor)
    p = np.exp(log_p)

    if n:
        pred_loss = float(-np.mean(log_p[np.arange(n), cache.targets]))
    else:
        pred_loss = 0.0

    lam = cfg.collision_lambda
    coll = np.zeros(len(cache.ego_feats))
    coll_gt = 0.0
    for i in range(n):
        coll += lam * (cache.hits[i] @ p[i])
        coll_gt += lam * float(cache.gt_hits[i] @ p[i])
    costs = cache.ego_feats @ v + coll
    c_gt = float(cache.gt_feats @ v) + coll_gt
    hinge = c_gt - costs + cache.margins + cache.penalties
    k_star = int(np.argmax(hinge))
    plan_active = hinge[k_star] > 0.0
    plan_loss = float(hinge[k_star]) if plan_active else 0.0

    d_v = np.zeros_like(v)
    g_log_p = np.zeros_like(log_p)
    if plan_active:
        d_v = cache.gt_feats - cache.ego_feats[k_star]
        if not cfg.freeze_marginals:
            for i in range(n):
                d_p_i = lam * (cache.gt_hits[i] - cache.hits[i][k_star])
                g_log_p[i] += d_p_i * p[i]  # d/dlogp via p = exp(logp)
    if cfg.alpha > 0.0 and n:
        g_log_p[np.arange(n), cache.targets] -= cfg.alpha / n

    d_w = np.zeros_like(w)
    d_gamma = 0.0
    if n and np.any(g_log_p):
        d_log_phi, d_pf = _bp_backward(g_log_p, -unary, cache.directed, pair_factor, state)
        d_unary = -d_log_phi
        d_w = np.einsum("nk,nkf->f", d_unary, cache.features)
        if cfg.learn_gamma:
            d_gamma = d_pf * (-2.0 * pair_factor)
    return pred_loss, plan_loss, d_w, d_v, d_gamma


def _batch_loss_grad(caches, w, v, gamma, cfg):
    pred = plan = 0.0
    d_w = np.zeros_like(w)
    d_v = np.zeros_like(v)
    d_g = 0.0
    for cache in caches:
        pl, ll, gw, gv, gg = _scene_loss_grad(cache, w, v, gamma, cfg)
        pred += pl
        plan += ll
        d_w += gw
        d_v += gv
        d_g += gg
    m = len(caches)
    total = (plan + cfg.alpha * pred) / m
    return total, pred / m, plan / m, d_w / m, d_v / m, d_g / m


def gradient_check(caches, w, v, gamma, cfg: TrainConfig, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients."""

    def loss_at(w_, v_, g_):
        return _batch_loss_grad(caches, w_, v_, g_, cfg)[0]

    _, _, _, d_w, d_v, d_g = _batch_loss_grad(caches, w, v, gamma, cfg)
    analytic = list(d_w) + list(d_v) + ([d_g] if cfg.learn_gamma else [])
    numeric = []
    for i in range(len(w)):
        e = np.zeros_like(w)
        e[i] = h
        numeric.append((loss_at(w + e, v, gamma) - loss_at(w - e, v, gamma)) / (2 * h))
    for i in range(len(v)):
        e = np.zeros_like(v)
        e[i] = h
        numeric.append((loss_at(w, v + e, gamma) - loss_at(w, v - e, gamma)) / (2 * h))
    if cfg.learn_gamma:
        numeric.append((loss_at(w, v, gamma + h) - loss_at(w, v, gamma - h)) / (2 * h))
    worst = 0.0
    for a, f in zip(analytic, numeric):
        # denominator floor: below 1e-4 the central difference is dominated
        # by cancellation noise (ulp(loss)/2h), so near-zero gradients are
        # compared absolutely at that scale instead of by ratio
        worst = max(worst, abs(a - f) / max(abs(a), abs(f), 1e-4))
    return worst


def train(dataset, cfg: TrainConfig) -> TrainReport:
    """Batch gradient descent on planning + alpha * prediction loss.

    Deterministic given the dataset and config. Raises TrainingDiverged
    (carrying the partial report) if the loss goes non-finite.
    """
    cfg.validate()
    dataset = list(dataset)
    if not dataset:
        raise ConfigError("empty training dataset")
    caches = [build_scene_cache(scene, cfg) for scene in dataset]
    w = np.zeros(energy_mod.NUM_FEATURES)
    v = np.zeros(planner.NUM_PLANNER_FEATURES)
    gamma = cfg.gamma
    vel_w = np.zeros_like(w)
    vel_v = np.zeros_like(v)
    vel_g = 0.0

    check = None
    if cfg.grad_check:
        check = gradient_check(caches[: cfg.batch_size], w, v, gamma, cfg)

    rng = np.random.default_rng(cfg.seed)
    curves = {"total": [], "pred": [], "plan": []}

    def finish(diverged=False):
        return TrainReport(
            epochs=len(curves["total"]),
            loss_total=tuple(curves["total"]),
            loss_prediction=tuple(curves["pred"]),
            loss_planning=tuple(curves["plan"]),
            energy_weights=energy_mod.EnergyWeights(w.copy(), gamma),
            planner_weights=planner.PlannerWeights(v.copy(), cfg.collision_lambda),
            grad_check_max_rel_error=check,
            diverged=diverged,
        )

    for _ in range(cfg.epochs):
        order = rng.permutation(len(caches))
        ep_total = ep_pred = ep_plan = 0.0
        n_batches = 0
        for start in range(0, len(caches), cfg.batch_size):
            batch = [caches[i] for i in order[start : start + cfg.batch_size]]
            total, pred, plan, d_w, d_v, d_g = _batch_loss_grad(batch, w, v, gamma, cfg)
            if not np.isfinite(total):
                raise TrainingDiverged("loss became non-finite", report=finish(diverged=True))
            ep_total += total
            ep_pred += pred
            ep_plan += plan
            n_batches += 1
            vel_w = cfg.momentum * vel_w + d_w
            vel_v = cfg.momentum * vel_v + d_v
            w = w - cfg.lr * vel_w
            v = v - cfg.lr * vel_v
            if cfg.learn_gamma:
                vel_g = cfg.momentum * vel_g + d_g
                gamma = max(0.0, gamma - cfg.lr * vel_g)
        curves["total"].append(ep_total / n_batches)
        curves["pred"].append(ep_pred / n_batches)
        curves["plan"].append(ep_plan / n_batches)
    return finish()
