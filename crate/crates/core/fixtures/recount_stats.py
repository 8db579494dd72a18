"""Recounts dialogue statistics of a game archive from first principles.

Usage: python3 recount_stats.py games_10.jsonl
"""
import json
import re
import sys

ATTR = {"color", "size", "texture", "shape", "location"}

games = [json.loads(l) for l in open(sys.argv[1]) if l.strip()]
tokens = []
repeated = 0
distinct_per_game = []
all_pairs = []
sup = [0, 0]
obj = [0, 0]
loc = 0
for g in games:
    pairs = [(t["qtype"], t["argument"]) for t in g["turns"]]
    all_pairs += pairs
    distinct_per_game.append(len(set(pairs)))
    if len(set(pairs)) < len(pairs):
        repeated += 1
    for i, t in enumerate(g["turns"]):
        tokens += [w.lower() for w in re.split(r"[^0-9A-Za-z]+", t["text"]) if w]
        loc += t["qtype"] == "location"
        nxt = g["turns"][i + 1]["qtype"] if i + 1 < len(g["turns"]) else None
        follow = nxt is not None and (nxt == "object" or nxt in ATTR)
        if t["answer"] == "Yes" and t["qtype"] == "supercategory":
            sup[0] += 1
            sup[1] += follow
        if t["answer"] == "Yes" and t["qtype"] == "object":
            obj[0] += 1
            obj[1] += follow
turns = len(all_pairs)
print("games", len(games))
print("turns", turns)
print("tokens", len(tokens), "types", len(set(tokens)))
print("lexical_diversity", f"{len(set(tokens))}/{len(tokens)}")
print("question_diversity", f"{sum(distinct_per_game)}/{len(games)}")
print("distinct_question_ratio", f"{len(set(all_pairs))}/{turns}")
print("repeated_question_rate", f"{repeated}/{len(games)}")
print("supercat_to_object_attr_rate", f"{sup[1]}/{sup[0]}")
print("object_to_attr_rate", f"{obj[1]}/{obj[0]}")
print("location_turn_rate", f"{loc}/{turns}")
print("vocabulary_size", len(set(tokens)))
