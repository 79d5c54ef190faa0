"""Symbolic execution of layer plans: shapes, parameter counts, FLOPs."""

from __future__ import annotations

from dataclasses import dataclass, field

from .planner import (
    CNN,
    LD,
    LD1,
    LD2,
    LN,
    LND,
    POOL,
    UD,
    UN,
    UND,
    XATTN,
    LayerOp,
    LayerPlan,
    PlanError,
)

FULL_ATTENTION = "full"
LINEAR_ATTENTION = "linear"


@dataclass(frozen=True)
class CostModel:
    kernel: int = 5
    heads: int = 4
    ffn_multiplier: int = 4
    attention_variant: str = FULL_ATTENTION

    def __post_init__(self):
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise PlanError("kernel size must be odd and >= 1")
        if self.heads < 1 or self.ffn_multiplier < 1:
            raise PlanError("heads and ffn multiplier must be >= 1")
        if self.attention_variant not in (FULL_ATTENTION, LINEAR_ATTENTION):
            raise PlanError(f"unknown attention variant {self.attention_variant!r}")


@dataclass
class ShapeTrace:
    input_shape: tuple[int, int]
    steps: list[tuple[int, LayerOp, tuple[int, int]]] = field(default_factory=list)

    @property
    def output_shape(self) -> tuple[int, int]:
        return self.steps[-1][2] if self.steps else self.input_shape


def _step_shape(op: LayerOp, shape: tuple[int, int]) -> tuple[int, int]:
    n, d = shape
    if op.kind == LN:
        n, d = n // 2 if n % 2 == 0 else -1, d
    elif op.kind == LD:
        n, d = n, d // 2 if d % 2 == 0 else -1
    elif op.kind == LND:
        n = n // 2 if n % 2 == 0 else -1
        d = d // 2 if d % 2 == 0 else -1
    elif op.kind in (LD1, LD2):
        d = d // op.factor if d % op.factor == 0 else -1
    elif op.kind == POOL:
        n = op.target
    elif op.kind == UN:
        n *= 2
    elif op.kind == UD:
        d *= 2
    elif op.kind == UND:
        n, d = n * 2, d * 2
    elif op.kind == XATTN:
        d *= op.factor
    else:
        raise PlanError(f"unknown layer kind {op.kind!r}")
    if n <= 0 or d <= 0:
        raise PlanError(f"layer {op.kind} produces non-integral shape from {shape}")
    return n, d


def propagate_shapes(plan: LayerPlan, input_shape: tuple[int, int] | None = None) -> ShapeTrace:
    """Walk the plan layer by layer, recording the shape after each op."""
    shape = tuple(input_shape) if input_shape is not None else tuple(plan.input_shape)
    if shape != tuple(plan.input_shape):
        raise PlanError(f"input {shape} does not match plan input {plan.input_shape}")
    trace = ShapeTrace(shape)
    for i, op in enumerate(plan.ops):
        try:
            shape = _step_shape(op, shape)
        except PlanError as exc:
            raise PlanError(f"layer {i}: {exc}") from exc
        trace.steps.append((i, op, shape))
    return trace


_CNN_KINDS = {LN, LD, LND, UN, UD, UND}


def _cnn_channels(op: LayerOp, d_in: int) -> int:
    if op.kind in (LD, LND):
        return d_in // 2
    if op.kind in (UD, UND):
        return d_in * 2
    return d_in


def count_params(plan: LayerPlan, cost_model: CostModel = CostModel()) -> int:
    """Parameter count; independent of input length."""
    total = 0
    d = plan.input_shape[1]
    m = cost_model.ffn_multiplier
    for op in plan.ops:
        if op.kind in _CNN_KINDS:
            c_out = _cnn_channels(op, d)
            total += cost_model.kernel * d * c_out + c_out
            d = c_out
        elif op.kind in (LD1, LD2, XATTN):
            d_out = d * op.factor if op.kind == XATTN else d // op.factor
            # attention qkv + out projection, channel projection, ffn, biases
            total += 4 * d * d + d * d_out
            total += 2 * d * (m * d)
            total += 5 * d + d_out + m * d
            d = d_out
        # pool has no parameters
    return total


def count_flops(plan: LayerPlan, input_shape: tuple[int, int] | None = None,
                cost_model: CostModel = CostModel()) -> int:
    """FLOP estimate summed over the shape trace (dominant matrix products)."""
    trace = propagate_shapes(plan, input_shape)
    shape = trace.input_shape
    m = cost_model.ffn_multiplier
    total = 0
    for _, op, shape_after in trace.steps:
        n, d = shape
        if op.kind in _CNN_KINDS:
            n_out, c_out = shape_after
            total += 2 * cost_model.kernel * d * c_out * n_out
        elif op.kind in (LD1, LD2, XATTN):
            total += 8 * n * d * d
            if cost_model.attention_variant == FULL_ATTENTION:
                total += 4 * n * n * d
            else:
                total += 4 * n * d * d
            total += 4 * n * d * (m * d)
        shape = shape_after
    return total


@dataclass
class PlanDefect:
    layer: int  # -1 for the terminal-shape check
    message: str


def validate_plan(plan: LayerPlan) -> list[PlanDefect]:
    """Empty list iff shapes propagate and land on the declared output."""
    defects: list[PlanDefect] = []
    try:
        trace = propagate_shapes(plan)
    except PlanError as exc:
        return [PlanDefect(-1, str(exc))]
    if trace.output_shape != tuple(plan.output_shape):
        defects.append(
            PlanDefect(
                -1,
                f"terminal shape {trace.output_shape} != declared {tuple(plan.output_shape)}",
            )
        )
    return defects


def analysis_report(plan: LayerPlan, cost_model: CostModel = CostModel()) -> dict:
    """Shape trace, params, and FLOPs as a plain dict for serialization."""
    trace = propagate_shapes(plan)
    return {
        "backbone": plan.backbone,
        "direction": plan.direction,
        "input_shape": list(plan.input_shape),
        "output_shape": list(plan.output_shape),
        "trace": [
            {"layer": i, "op": op.kind, "factor": op.factor, "target": op.target,
             "shape": list(shape)}
            for i, op, shape in trace.steps
        ],
        "params": count_params(plan, cost_model),
        "flops": count_flops(plan, cost_model=cost_model),
    }
