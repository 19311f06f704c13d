"""Scikit-learn style wrapper around the formula-size training loop.

``FormulaSizeClassifier`` learns a short Boolean formula from tabular data and
predicts by evaluating it.  It plays by the sklearn estimator rules
(``get_params``/``set_params``, ``fit`` returns self, trailing-underscore
attributes) so it composes with pipelines and model selection utilities.
"""

from __future__ import annotations

from decimal import Decimal
from typing import Any, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .dataset import EncodedDataset, Provenance, scale_value
from .formula import eval_mask, render, to_json_obj
from .fsm import FsmConfig, run_fsm
from .propositions import Scheme
from .search import Budget

_MAX_INFER_DECIMALS = 6


def _infer_decimals(values: Sequence[Decimal]) -> int:
    for d in range(_MAX_INFER_DECIMALS + 1):
        if all(v.scaleb(d) == v.scaleb(d).to_integral_value() for v in values):
            return d
    return _MAX_INFER_DECIMALS


class FormulaSizeClassifier(BaseEstimator, ClassifierMixin):
    """Binary classifier whose model is one short Boolean formula.

    Columns are typed from the training data: bool dtype or all-0/1 values
    become boolean attributes, string/object columns are one-hot encoded,
    everything else is numeric.

    Parameters
    ----------
    scheme : "median", "pivot" or "interval"
        How numeric attributes become Boolean tests: a fixed median pivot,
        a searched pivot threshold, or a searched inclusive interval.
    decimals : int, dict or "infer"
        Decimal places preserved when numeric columns are scaled to integers;
        a dict maps column names, "infer" inspects the training values.
    split_ratio, length_cap, random_state
        Training loop knobs: internal train/validation ratio, a hard cap on
        the length bound, and the split seed.
    time_per_length, nodes_per_length, time_total, nodes_total
        Optional budgets; without them the search is exact (and exponential
        in the length bound, so cap generously but budget real data).
    workers : parallel search workers (results do not depend on this).
    """

    def __init__(
        self,
        scheme: str = "pivot",
        decimals: int | dict | str = 0,
        split_ratio: float = 0.7,
        length_cap: int = 20,
        time_per_length: float | None = None,
        nodes_per_length: int | None = None,
        time_total: float | None = None,
        nodes_total: int | None = None,
        workers: int = 1,
        random_state: int = 0,
    ):
        self.scheme = scheme
        self.decimals = decimals
        self.split_ratio = split_ratio
        self.length_cap = length_cap
        self.time_per_length = time_per_length
        self.nodes_per_length = nodes_per_length
        self.time_total = time_total
        self.nodes_total = nodes_total
        self.workers = workers
        self.random_state = random_state

    # -- data wrangling ----------------------------------------------------

    def _column_names(self, X) -> list[str]:
        if hasattr(X, "columns"):
            return [str(c) for c in X.columns]
        return [f"x{i}" for i in range(np.asarray(X, dtype=object).shape[1])]

    def _columns(self, X) -> list[np.ndarray]:
        if hasattr(X, "columns"):
            return [np.asarray(X[c]) for c in X.columns]
        arr = np.asarray(X)
        if arr.ndim != 2:
            raise ValueError("X must be two-dimensional")
        return [arr[:, i] for i in range(arr.shape[1])]

    def _decimals_for(self, name: str, values: list) -> int:
        if self.decimals == "infer":
            return _infer_decimals([Decimal(str(v)) for v in values])
        if isinstance(self.decimals, dict):
            return int(self.decimals.get(name, 0))
        return int(self.decimals)

    @staticmethod
    def _column_kind(values: np.ndarray) -> str:
        if values.dtype == bool:
            return "boolean"
        if values.dtype.kind in "OUS":
            return "categorical"
        distinct = set(np.unique(values).tolist())
        if distinct <= {0, 1, 0.0, 1.0, True, False}:
            return "boolean"
        return "numeric"

    def _encode_fit(self, X, y) -> EncodedDataset:
        names = self._column_names(X)
        columns = self._columns(X)
        n = len(columns[0]) if columns else 0
        classes = np.unique(np.asarray(y))
        if len(classes) != 2:
            raise ValueError(f"need a binary target, got {len(classes)} classes")
        self.classes_ = classes
        target_mask = 0
        y_arr = np.asarray(y)
        for pos in range(n):
            if y_arr[pos] == classes[1]:
                target_mask |= 1 << pos

        bool_attrs: dict[int, int] = {}
        num_attrs: dict[int, tuple[int, ...]] = {}
        provenance: dict[int, Provenance] = {}
        column_info: list[dict[str, Any]] = []
        attr = 0
        for name, values in zip(names, columns):
            kind = self._column_kind(values)
            if kind == "boolean":
                mask = 0
                for pos, v in enumerate(values):
                    if bool(v):
                        mask |= 1 << pos
                bool_attrs[attr] = mask
                provenance[attr] = Provenance(source=name, kind="boolean", display=name)
                column_info.append({"name": name, "kind": "boolean", "attrs": [attr]})
                attr += 1
            elif kind == "categorical":
                cats = sorted({str(v) for v in values})
                attrs = []
                for cat in cats:
                    mask = 0
                    for pos, v in enumerate(values):
                        if str(v) == cat:
                            mask |= 1 << pos
                    bool_attrs[attr] = mask
                    provenance[attr] = Provenance(
                        source=name, kind="boolean", category=cat, display=f"{name}={cat}"
                    )
                    attrs.append(attr)
                    attr += 1
                column_info.append(
                    {"name": name, "kind": "categorical", "attrs": attrs, "categories": cats}
                )
            else:
                cells = [Decimal(str(v)) for v in values]
                if any(not c.is_finite() for c in cells):
                    raise ValueError(f"column {name!r} contains non-finite values")
                d = self._decimals_for(name, values.tolist())
                num_attrs[attr] = tuple(scale_value(c, d, name) for c in cells)
                provenance[attr] = Provenance(
                    source=name, kind="numeric", factor=10**d, display=name
                )
                column_info.append(
                    {"name": name, "kind": "numeric", "attrs": [attr], "decimals": d}
                )
                attr += 1
        self._column_info = column_info
        return EncodedDataset(
            point_ids=tuple(range(n)),
            bool_attrs=bool_attrs,
            num_attrs=num_attrs,
            target=target_mask,
            provenance=provenance,
        )

    def _encode_predict(self, X) -> tuple[EncodedDataset, int]:
        names = self._column_names(X)
        expected = [info["name"] for info in self._column_info]
        if names != expected and names != [f"x{i}" for i in range(len(expected))]:
            raise ValueError(f"predict columns {names} do not match fit columns {expected}")
        columns = self._columns(X)
        if len(columns) != len(expected):
            raise ValueError(
                f"predict data has {len(columns)} columns, expected {len(expected)}"
            )
        n = len(columns[0]) if columns else 0
        bool_attrs: dict[int, int] = {}
        num_attrs: dict[int, tuple[int, ...]] = {}
        for info, values in zip(self._column_info, columns):
            if info["kind"] == "boolean":
                mask = 0
                for pos, v in enumerate(values):
                    if bool(v):
                        mask |= 1 << pos
                bool_attrs[info["attrs"][0]] = mask
            elif info["kind"] == "categorical":
                for cat_attr, cat in zip(info["attrs"], info["categories"]):
                    mask = 0
                    for pos, v in enumerate(values):
                        if str(v) == cat:
                            mask |= 1 << pos
                    bool_attrs[cat_attr] = mask
            else:
                cells = [Decimal(str(v)) for v in values]
                num_attrs[info["attrs"][0]] = tuple(
                    scale_value(c, info["decimals"], info["name"]) for c in cells
                )
        ds = EncodedDataset(
            point_ids=tuple(range(n)),
            bool_attrs=bool_attrs,
            num_attrs=num_attrs,
            target=0,
            provenance=self.provenance_,
        )
        return ds, n

    # -- estimator API -------------------------------------------------------

    def fit(self, X, y):
        ds = self._encode_fit(X, y)
        self.n_features_in_ = len(self._column_info)
        self.feature_names_in_ = np.asarray([info["name"] for info in self._column_info])
        self.provenance_ = ds.provenance
        cfg = FsmConfig(
            scheme=Scheme(self.scheme),
            split_ratio=self.split_ratio,
            seed=self.random_state,
            per_bound_budget=Budget(
                time_limit=self.time_per_length, node_limit=self.nodes_per_length
            ),
            total_budget=Budget(time_limit=self.time_total, node_limit=self.nodes_total),
            length_cap=self.length_cap,
            workers=self.workers,
        )
        result = run_fsm(ds, cfg)
        self.result_ = result
        self.formula_ = result.final
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "formula_"):
            raise NotFittedError("fit the classifier before using it")

    def predict(self, X):
        self._check_fitted()
        ds, n = self._encode_predict(X)
        mask = eval_mask(self.formula_, ds)
        return np.asarray([self.classes_[1] if mask >> i & 1 else self.classes_[0] for i in range(n)])

    def explanation(self) -> str:
        """The learned formula, rendered for humans."""
        self._check_fitted()
        return render(self.formula_, self.provenance_)

    def formula_json(self) -> dict:
        """The learned formula as a serializable RPN token list."""
        self._check_fitted()
        return to_json_obj(self.formula_, self.provenance_)
