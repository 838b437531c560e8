"""Round-robin optimizer sharding simulated with virtual ranks.

Per-layer optimizer work is assigned layer i -> rank i mod num_ranks; each
rank steps only its own layers (optimizer state never leaves its owner) and
an all-gather then republishes the updated parameters to every rank. Because
per-layer steps are pure functions, the sharded execution is bitwise
identical to stepping every layer in one place; the simulation's job is to
keep the state rank-local and to account for gathered traffic, which counts
parameter bytes only (8 bytes per entry) and never optimizer state.
"""

from __future__ import annotations

from dataclasses import dataclass

from .optimizers import HyperParams, Layer, step_layer


@dataclass(frozen=True)
class ShardPlan:
    num_ranks: int
    assignment: tuple[int, ...]  # layer index -> owning rank

    def layers_of(self, rank: int) -> list[int]:
        return [i for i, r in enumerate(self.assignment) if r == rank]


def make_plan(num_layers: int, num_ranks: int) -> ShardPlan:
    if num_layers < 1 or num_ranks < 1:
        raise ValueError("num_layers and num_ranks must be >= 1")
    return ShardPlan(
        num_ranks=num_ranks,
        assignment=tuple(i % num_ranks for i in range(num_layers)),
    )


def run_sharded(layers, grads, hp: HyperParams, plan: ShardPlan):
    """One sharded optimizer step; returns (updated layers, gathered bytes).

    Each rank steps its assigned layers against the shared gradients; the
    all-gather copies every updated parameter to all ranks (accounted in
    bytes), while momentum/moment buffers and the magnitude states stay with
    the owning rank.
    """
    if len(plan.assignment) != len(layers):
        raise ValueError(
            f"plan covers {len(plan.assignment)} layers, got {len(layers)}"
        )
    if len(grads) != len(layers):
        raise ValueError(f"{len(grads)} gradients for {len(layers)} layers")
    updated: list[Layer | None] = [None] * len(layers)
    for rank in range(plan.num_ranks):
        for i in plan.layers_of(rank):
            updated[i] = step_layer(layers[i], grads[i], hp)
    traffic = sum(8 * layer.state.param.size for layer in updated)
    return updated, traffic
