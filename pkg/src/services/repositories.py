from __future__ import annotations

import csv
import logging
from functools import lru_cache
from pathlib import Path
from typing import Any, Generic, Iterable, Iterator, Mapping, Sequence, Type, TypeVar

import numpy as np
import orjson as _orjson
from pydantic import BaseModel, ValidationError

from ..exceptions import ConfigError, DataError
from .cdr import load_cdr_file, write_cdr_file
from .models import CdrFormat, CdrRecord, ParseReport, SubscriptionLabel, UserId
from .storage import open_text, read_json, write_json
from .synth import SynthCorpus

T = TypeVar("T", bound=BaseModel)

logger = logging.getLogger(__name__)

TRUTH_HEADER = ("user_id", "label")
SIDES_HEADER = ("user_id", "side", "label")
EDGES_HEADER = ("from", "to")
SOLUTION_HEADER = ("user_id", "label", "posterior_prepaid", "fixed_flag")


@lru_cache(maxsize=256)
def _validate_cached(model_cls: Type[T], payload: bytes) -> T:
    return model_cls.model_validate_json(payload)


class JsonModelRepository(Generic[T]):
    """Versioned pydantic documents (trained models, propagation reports) stored as JSON files."""

    def __init__(self, model_class: Type[T]) -> None:
        self.model_class = model_class

    def save(self, path: str | Path, item: T) -> Path:
        target = Path(path)
        write_json(target, item.model_dump(mode="json"))
        logger.info("Repository: saved %s to %s", self.model_class.__name__, target)
        return target

    def load(self, path: str | Path) -> T:
        payload = _orjson.dumps(read_json(path), option=_orjson.OPT_SORT_KEYS)
        try:
            return _validate_cached(self.model_class, payload)
        except ValidationError as e:
            raise DataError(f"{path} is not a valid {self.model_class.__name__}: {e}")


def _rows(path: str | Path, expected: Sequence[str]) -> Iterator[tuple[int, list[str]]]:
    """CSV rows with their line numbers; a first row naming the columns is skipped."""
    with open_text(path) as f:
        for line_no, row in enumerate(csv.reader(f), start=1):
            if not row or not any(cell.strip() for cell in row):
                continue
            cells = [cell.strip() for cell in row]
            if line_no == 1 and cells[0].lower() == expected[0]:
                continue
            yield line_no, cells


def _user_id(value: str, path: str | Path, line_no: int) -> UserId:
    try:
        u = int(value)
    except ValueError:
        raise DataError(f"{path}:{line_no}: user id {value!r} is not an integer")
    if u < 0:
        raise DataError(f"{path}:{line_no}: negative user id")
    return u


def _write_rows(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> int:
    n = 0
    with open_text(path, "w") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
            n += 1
    logger.debug("Repository: wrote %s rows=%d", path, n)
    return n


def _fmt(x: float) -> str:
    return repr(float(x))


class CorpusRepository:
    """Every on-disk format of the pipeline: CDRs, label tables, edge lists, solutions and models."""

    # --- CDRs

    def load_records(
        self, path: str | Path, has_header: bool = False, window: tuple[int, int] | None = None
    ) -> tuple[list[CdrRecord], ParseReport]:
        return load_cdr_file(path, CdrFormat(has_header=has_header, window=window))

    def write_records(self, path: str | Path, records: Iterable[CdrRecord]) -> int:
        return write_cdr_file(records, path)

    # --- Labels

    def read_labels(self, path: str | Path) -> dict[UserId, SubscriptionLabel]:
        """`user_id,label` rows (truth or predictions); labels as 0/1 or prepaid/postpaid."""
        labels: dict[UserId, SubscriptionLabel] = {}
        for line_no, cells in _rows(path, TRUTH_HEADER):
            if len(cells) < 2:
                raise DataError(f"{path}:{line_no}: expected user_id,label")
            u = _user_id(cells[0], path, line_no)
            if u in labels:
                raise DataError(f"{path}:{line_no}: duplicate user {u}")
            labels[u] = SubscriptionLabel.coerce(cells[1])
        if not labels:
            raise DataError(f"{path} holds no labels")
        logger.info("Repository: read %s labels=%d", path, len(labels))
        return labels

    def write_labels(self, path: str | Path, labels: Mapping[UserId, SubscriptionLabel]) -> int:
        return _write_rows(path, TRUTH_HEADER, ((u, int(labels[u])) for u in sorted(labels)))

    # --- Bipartite

    def read_sides(self, path: str | Path) -> tuple[dict[UserId, SubscriptionLabel], set[UserId]]:
        side_a: dict[UserId, SubscriptionLabel] = {}
        side_b: set[UserId] = set()
        for line_no, cells in _rows(path, SIDES_HEADER):
            u = _user_id(cells[0], path, line_no)
            side = cells[1].upper() if len(cells) > 1 else ""
            if side == "A":
                if len(cells) < 3 or not cells[2]:
                    raise DataError(f"{path}:{line_no}: side A user {u} needs a label")
                side_a[u] = SubscriptionLabel.coerce(cells[2])
            elif side == "B":
                side_b.add(u)
            else:
                raise DataError(f"{path}:{line_no}: side must be A or B, got {side!r}")
        logger.info("Repository: read %s side_a=%d side_b=%d", path, len(side_a), len(side_b))
        return side_a, side_b

    def write_sides(
        self, path: str | Path, side_a: Mapping[UserId, SubscriptionLabel], side_b: Iterable[UserId]
    ) -> int:
        rows = [(u, "A", int(side_a[u])) for u in sorted(side_a)]
        rows += [(u, "B", "") for u in sorted(side_b)]
        return _write_rows(path, SIDES_HEADER, rows)

    def read_edges(self, path: str | Path) -> list[tuple[UserId, UserId]]:
        edges = []
        for line_no, cells in _rows(path, EDGES_HEADER):
            if len(cells) < 2:
                raise DataError(f"{path}:{line_no}: expected from,to")
            edges.append((_user_id(cells[0], path, line_no), _user_id(cells[1], path, line_no)))
        return edges

    def write_edges(self, path: str | Path, edges: Iterable[tuple[UserId, UserId]]) -> int:
        return _write_rows(path, EDGES_HEADER, edges)

    # --- Outputs

    def write_features(
        self,
        path: str | Path,
        users: Sequence[UserId],
        labels: Mapping[UserId, SubscriptionLabel],
        X: np.ndarray,
        names: Sequence[str],
    ) -> int:
        rows = ([u, int(labels[u]), *(_fmt(v) for v in X[i])] for i, u in enumerate(users))
        return _write_rows(path, ("user_id", "label", *names), rows)

    def write_solution(
        self,
        path: str | Path,
        nodes: Sequence[UserId],
        labels: Sequence[int],
        posterior_prepaid: Sequence[float],
        fixed: Iterable[int],
    ) -> int:
        fixed_set = set(fixed)
        rows = (
            (u, int(labels[i]), _fmt(posterior_prepaid[i]), int(i in fixed_set))
            for i, u in enumerate(nodes)
        )
        return _write_rows(path, SOLUTION_HEADER, rows)

    def write_table(self, path: str | Path, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> int:
        return _write_rows(path, columns, ([_fmt(r[c]) if isinstance(r[c], float) else r[c] for c in columns]
                                            for r in rows))

    def write_document(self, path: str | Path, document: Any) -> Path:
        target = Path(path)
        write_json(target, document)
        return target

    # --- Synthetic corpora

    def write_corpus(self, corpus: SynthCorpus, out_dir: str | Path, compress: bool = False) -> dict[str, Path]:
        out = Path(out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ConfigError(f"cannot create output directory {out}: {e}")
        paths = {
            "cdr": out / ("cdr.csv.gz" if compress else "cdr.csv"),
            "truth": out / "truth.csv",
            "synth_config": out / "synth_config.json",
        }
        self.write_records(paths["cdr"], corpus.records)
        self.write_labels(paths["truth"], corpus.truth)
        write_json(paths["synth_config"], corpus.config.model_dump(mode="json"))
        if corpus.bipartite is not None:
            paths.update({
                "cross_cdr": out / "cross_cdr.csv",
                "sides": out / "sides.csv",
                "bipartite": out / "bipartite.csv",
                "hidden_b": out / "hidden_b.csv",
            })
            self.write_records(paths["cross_cdr"], corpus.inter_company_records)
            self.write_sides(paths["sides"], corpus.bipartite.side_a, corpus.bipartite.side_b)
            self.write_edges(paths["bipartite"], corpus.bipartite.edges)
            self.write_labels(paths["hidden_b"], corpus.hidden_b)
        logger.info("Repository: corpus written to %s files=%d", out, len(paths))
        return paths
