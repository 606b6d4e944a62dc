from typing import Dict, List, Optional, Sequence
import json

import pandas as pd

from scottrank.backforth import BfTable
from scottrank.base import FiniteStructure, Signature
from scottrank.products import GadgetMeasurement
from scottrank.reductions import HarnessReport
from scottrank.values import Ordinal


def bf_frame(table: BfTable) -> pd.DataFrame:
    return pd.DataFrame(table.rows(), columns=["left", "right", "level"])


def rank_frame(ranks: Dict[str, Dict[tuple, Ordinal]]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {"index": p, "element": list(a), "rank": str(r)}
            for p, table in ranks.items()
            for a, r in sorted(table.items())
        ],
        columns=["index", "element", "rank"],
    )


def gadget_frame(measurements: Sequence[GadgetMeasurement]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "family": m.family,
                "a": list(m.a),
                "rank": str(m.rank),
                "level": None if m.level is None else str(m.level),
            }
            for m in measurements
        ],
        columns=["family", "a", "rank", "level"],
    )


def harness_frame(report: HarnessReport) -> pd.DataFrame:
    return pd.DataFrame(report.counterexamples, columns=["pair", "before", "after", "left", "right"])


def structure_frame(M: FiniteStructure) -> pd.DataFrame:
    """One row per tuple; the universe and constants ride along in `attrs`."""
    df = pd.DataFrame(
        [
            {"relation": name, "tuple": list(tup)}
            for name in M.signature.relation_names
            for tup in sorted(M.interp[name])
        ],
        columns=["relation", "tuple"],
    )
    df.attrs["universe"] = M.universe
    df.attrs["consts"] = dict(M.consts)
    df.attrs["relations"] = [list(rel) for rel in M.signature.relations]
    return df


def read_structure(path: str) -> "pd.DataFrame":
    """Load a structure file as a DataFrame of its tuples.

    Args:
        path (str):
            A JSON file holding a structure as written by `query_dict`.
    Returns:
        pd.DataFrame: columns `relation` and `tuple`; `df.attrs` keeps the
        universe, the constants and the relation arities.
    """
    with open(path, "r", encoding="utf-8") as fp:
        data = json.load(fp)
    return structure_frame(FiniteStructure.from_raw(data.get("structure", data)))


def to_structure(self, universe: Optional[int] = None) -> FiniteStructure:
    """Turn a tuple frame back into a structure.

    Args:
        universe (int, optional):
            The universe size. Defaults to `attrs["universe"]`, or one more
            than the largest element mentioned.
    """
    relations: List[List] = list(self.attrs.get("relations", []))
    known = {name for name, _ in relations}
    interp: Dict[str, List[tuple]] = {name: [] for name in known}
    largest = -1
    for name, tup in zip(self["relation"], self["tuple"]):
        tup = tuple(int(x) for x in tup)
        if name not in known:
            relations.append([name, len(tup)])
            known.add(name)
            interp[name] = []
        interp[name].append(tup)
        largest = max([largest, *tup])
    consts = dict(self.attrs.get("consts", {}))
    if universe is None:
        universe = self.attrs.get("universe", max([largest, *consts.values()]) + 1)
    return FiniteStructure(
        signature=Signature(relations=[tuple(rel) for rel in relations], constants=list(consts)),
        universe=universe,
        interp=interp,
        consts=consts,
    )


def pandas():
    pd.read_structure = read_structure
    pd.DataFrame.to_structure = to_structure
