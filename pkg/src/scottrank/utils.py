from typing import List, Dict, Iterable, Tuple, Any, Sequence, Set
import itertools
import json


class CapExceeded(ValueError):
    """Raised when a brute-force search would exceed a configured cap."""


class InvariantViolation(AssertionError):
    """Raised when a computed object fails one of its own invariants."""


def check_cap(value: int, limit: int, what: str) -> int:
    if value > limit:
        raise CapExceeded(f"{what} is {value}, which exceeds the cap {limit}")
    return value


def flatten_dict(data: Any, drop_none: bool = True):
    """Turn sets and tuples into (sorted) lists so the result is JSON-ready.
    Entries whose values are None are removed unless `drop_none` is False."""
    if isinstance(data, dict):
        return {
            key: flatten_dict(value, drop_none)
            for key, value in data.items()
            if value is not None or not drop_none
        }
    elif isinstance(data, (set, frozenset)):
        return sorted(flatten_dict(value, drop_none) for value in data)
    elif isinstance(data, (list, tuple)):
        return [flatten_dict(value, drop_none) for value in data]
    else:
        return data


def dump_json(data: Dict) -> str:
    """Reports keep None results as JSON null."""
    return json.dumps(flatten_dict(data, drop_none=False), sort_keys=True, indent=2, ensure_ascii=False)


def mixed_radix(radices: Sequence[int]) -> List[Tuple[int, ...]]:
    """All digit tuples for the given radices, first digit most significant."""
    return list(itertools.product(*[range(r) for r in radices]))


def mixed_radix_index(digits: Sequence[int], radices: Sequence[int]) -> int:
    idx = 0
    for digit, radix in zip(digits, radices):
        idx = idx * radix + digit
    return idx


def product_size(radices: Iterable[int]) -> int:
    size = 1
    for r in radices:
        size *= r
    return size


def is_equivalence(pairs: Iterable[Tuple[int, int]], universe: int) -> bool:
    rel = set(tuple(p) for p in pairs)
    if any((a, a) not in rel for a in range(universe)):
        return False
    if any((b, a) not in rel for a, b in rel):
        return False
    for a, b in rel:
        for c in range(universe):
            if (b, c) in rel and (a, c) not in rel:
                return False
    return True


def classes_of(pairs: Iterable[Tuple[int, int]], universe: int) -> List[Tuple[int, ...]]:
    """Classes of an equivalence relation, each sorted, ordered by least element."""
    rel = set(tuple(p) for p in pairs)
    seen: Set[int] = set()
    classes = []
    for a in range(universe):
        if a in seen:
            continue
        block = tuple(b for b in range(universe) if (a, b) in rel)
        seen.update(block)
        classes.append(block)
    return classes


# Bit-vectors of length n are ints, bit i holding position i.


def bit(word: int, i: int) -> int:
    return (word >> i) & 1


def prefix(word: int, k: int) -> int:
    return word & ((1 << k) - 1)


def lcp(word: int, other: int, length: int) -> int:
    """Length of the longest common prefix of two words of the given length."""
    diff = word ^ other
    if diff == 0:
        return length
    return (diff & -diff).bit_length() - 1


def bits_to_str(word: int, length: int) -> str:
    return "".join(str(bit(word, i)) for i in range(length))


def str_to_bits(s: str) -> int:
    s = s.strip()
    if any(ch not in "01" for ch in s):
        raise ValueError(f"Invalid bitstring {s!r}")
    return sum(1 << i for i, ch in enumerate(s) if ch == "1")
