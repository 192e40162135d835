"""Surface definition of the emulated power-system linearization toolbox.

The emulator mimics the calling conventions of a MATLAB linearization
toolbox: scripts generate operating data for a grid case, optionally
pollute/clean/normalize it, then train, compare, rank or visualize
linearization methods.  Only bookkeeping happens here; there are no power
flow numerics anywhere in this package.
"""

from __future__ import annotations

from .knowledge_base import FunctionSpec, PositionalParam

# Linearization methods the emulator recognises.
METHODS: tuple[str, ...] = (
    "OLS",
    "QR",
    "LS_CLS",
    "RR",
    "RR_KPC",
    "PLS_RECW",
    "TAY",
    "DLPF",
    "DLPF_C",
    "PTDF",
)

# Grid cases data can be generated for.
CASES: tuple[str, ...] = ("case9", "case14", "case39", "case57", "case118")


def default_functions() -> list[FunctionSpec]:
    """Function signatures of the emulated toolbox.

    ``accepted_options`` is left empty here; the knowledge-base builder
    derives it from the option registry's ``associated_functions`` column.
    """
    ref_dataset = PositionalParam("data", "reference", required=True, domain="dataset")
    methods_cell = PositionalParam("methods", "cell-of-strings", required=True, domain="method")
    return [
        FunctionSpec(
            "generate_data",
            (PositionalParam("case_name", "string", required=True, domain="case"),),
            (),
            "Generate training and testing samples for a grid case.",
        ),
        FunctionSpec(
            "pollute_data",
            (ref_dataset,),
            (),
            "Inject noise or outliers into a generated dataset.",
        ),
        FunctionSpec(
            "clean_data",
            (ref_dataset,),
            (),
            "Remove outliers and repair a polluted dataset.",
        ),
        FunctionSpec(
            "normalize_data",
            (ref_dataset,),
            (),
            "Scale dataset features onto a common range.",
        ),
        FunctionSpec(
            "train",
            (ref_dataset, methods_cell),
            (),
            "Fit one or more linearization methods on a dataset.",
        ),
        FunctionSpec(
            "compare",
            (ref_dataset, methods_cell),
            (),
            "Train several methods on one dataset and compare them.",
        ),
        FunctionSpec(
            "rank",
            (ref_dataset, methods_cell),
            (),
            "Train several methods and order them by a metric.",
        ),
        FunctionSpec(
            "visualize",
            (
                PositionalParam("target", "reference", required=True, domain="dataset_or_model"),
                methods_cell,
            ),
            (),
            "Plot linearization results for the given methods.",
        ),
    ]
