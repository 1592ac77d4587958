"""Converters from the published human-norm dataset formats to the
normalized TSV (word1, word2, lang1, lang2, score).

Supported families:
  simlex    tab-separated with a header row; scores in the SimLex999 column,
            scale 0-10.
  men       whitespace-separated ``word1 word2 score`` lines, scale 0-50;
            optional -n/-j/-v part-of-speech suffixes are stripped.
  wordsim   either the comma-separated "Word 1,Word 2,Human (mean)" form with
            a header, or headerless tab-separated goldstandard files;
            scale 0-10.
  rg65      whitespace-separated ``word1 word2 score`` lines, scale 0-4;
            language tags select the monolingual or cross-lingual variants.
"""

from __future__ import annotations

from .simeval import SimilarityDataset, SimilarityPair

FORMATS = ("simlex", "men", "wordsim", "rg65")

SCALES = {
    "simlex": (0.0, 10.0),
    "men": (0.0, 50.0),
    "wordsim": (0.0, 10.0),
    "rg65": (0.0, 4.0),
}

_POS_SUFFIXES = ("-n", "-j", "-v")


def _strip_pos(word: str) -> str:
    for suf in _POS_SUFFIXES:
        if word.endswith(suf):
            return word[: -len(suf)]
    return word


def _data_lines(path: str):
    with open(path, encoding="utf-8") as f:
        for no, raw in enumerate(f, start=1):
            line = raw.strip()
            if line and not line.startswith("#"):
                yield no, line


def convert_simlex(path: str, name: str = "SimLex-999") -> SimilarityDataset:
    pairs = []
    col = 3  # SimLex999 column in the published file
    for no, line in _data_lines(path):
        cols = line.split("\t")
        if no == 1 and cols and cols[0].lower() == "word1":
            try:
                col = [c.lower() for c in cols].index("simlex999")
            except ValueError as e:
                raise ValueError(f"{path}: header lacks a SimLex999 column") from e
            continue
        if len(cols) <= col:
            raise ValueError(f"{path}:{no}: expected at least {col + 1} columns")
        pairs.append(SimilarityPair(cols[0].lower(), cols[1].lower(), "en", "en", float(cols[col])))
    return SimilarityDataset(name=name, pairs=pairs, scale=SCALES["simlex"])


def convert_men(path: str, name: str = "MEN") -> SimilarityDataset:
    pairs = []
    for no, line in _data_lines(path):
        cols = line.split()
        if len(cols) != 3:
            raise ValueError(f"{path}:{no}: expected 'word1 word2 score'")
        pairs.append(
            SimilarityPair(
                _strip_pos(cols[0]).lower(), _strip_pos(cols[1]).lower(),
                "en", "en", float(cols[2]),
            )
        )
    return SimilarityDataset(name=name, pairs=pairs, scale=SCALES["men"])


def convert_wordsim(path: str, name: str = "WordSim353") -> SimilarityDataset:
    pairs = []
    for no, line in _data_lines(path):
        if "," in line:
            cols = [c.strip() for c in line.split(",")]
            if no == 1 and cols[0].lower().startswith("word"):
                continue
        else:
            cols = line.split("\t")
            if len(cols) == 1:
                cols = line.split()
        if len(cols) < 3:
            raise ValueError(f"{path}:{no}: expected word1, word2, score")
        pairs.append(SimilarityPair(cols[0].lower(), cols[1].lower(), "en", "en", float(cols[2])))
    return SimilarityDataset(name=name, pairs=pairs, scale=SCALES["wordsim"])


def convert_rg65(
    path: str, name: str = "RG-65", lang1: str = "en", lang2: str = "en"
) -> SimilarityDataset:
    pairs = []
    for no, line in _data_lines(path):
        cols = line.split("\t")
        if len(cols) == 1:
            cols = line.split()
        if len(cols) != 3:
            raise ValueError(f"{path}:{no}: expected 'word1 word2 score'")
        pairs.append(SimilarityPair(cols[0].lower(), cols[1].lower(), lang1, lang2, float(cols[2])))
    return SimilarityDataset(name=name, pairs=pairs, scale=SCALES["rg65"])


def convert(fmt: str, path: str, **kwargs) -> SimilarityDataset:
    if fmt == "simlex":
        return convert_simlex(path, **kwargs)
    if fmt == "men":
        return convert_men(path, **kwargs)
    if fmt == "wordsim":
        return convert_wordsim(path, **kwargs)
    if fmt == "rg65":
        return convert_rg65(path, **kwargs)
    raise ValueError(f"unknown dataset format {fmt!r}; known: {', '.join(FORMATS)}")
