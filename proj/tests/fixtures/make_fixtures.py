#!/usr/bin/env python3
"""Regenerates the committed test fixtures. Output is deterministic."""

import json
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent

SUBJECTS = ["the committee", "the river authority", "a small bakery", "the research team", "the city council",
            "an old lighthouse", "the appeals court", "a graduate student", "the orchestra", "the farming cooperative",
            "the museum curator", "a local newspaper", "the hospital board", "the railway company", "a chess club"]
VERBS = ["reviewed", "published", "rejected", "expanded", "documented", "measured", "questioned", "restored",
         "funded", "delayed", "approved", "analyzed", "described", "tested", "summarized"]
OBJECTS = ["the annual budget", "a new bridge design", "the flood records", "several rare manuscripts",
           "the contract terms", "a detailed survey", "the migration data", "its safety procedures",
           "the ancient harbor walls", "a proposal for solar panels", "the witness statements",
           "the spectral measurements", "a revised curriculum", "the pension scheme", "the archive catalogue"]
TAILS = ["after a long public debate", "during the winter months", "with support from volunteers",
         "despite strong objections", "for the third consecutive year", "under a tight deadline",
         "in cooperation with two universities", "following an independent audit", "before the election",
         "as part of a wider reform"]

LAW = ["The plaintiff argued that the statute of limitations had not expired.",
       "The defendant moved to dismiss the complaint for lack of jurisdiction.",
       "The court reviewed the record de novo and found no reversible error.",
       "The appellate panel noted that the contract was ambiguous on its face.",
       "Counsel for the respondent conceded that the notice was untimely.",
       "The trial court excluded the expert testimony as unreliable.",
       "The judgment of the district court is affirmed in part and reversed in part."]
SCIENCE = ["We propose a sparse attention mechanism that scales linearly with sequence length.",
           "Experiments on three benchmarks show consistent improvements over strong baselines.",
           "The variational bound is tightened by an auxiliary importance sampler.",
           "Our analysis shows that the estimator is unbiased under mild assumptions.",
           "The measured spectral index agrees with the theoretical prediction within errors.",
           "We release the code and the trained models to support reproducibility.",
           "Ablation studies confirm that each component contributes to the final accuracy."]


def sentence(rng):
    return f"{rng.choice(SUBJECTS).capitalize()} {rng.choice(VERBS)} {rng.choice(OBJECTS)} {rng.choice(TAILS)}."


def prose(rng, min_chars, extra=None):
    parts = []
    while sum(len(p) + 1 for p in parts) < min_chars:
        pool = extra if extra and rng.random() < 0.5 else None
        parts.append(rng.choice(pool) if pool else sentence(rng))
        if rng.random() < 0.15:
            parts.append("\n\n")
    text = " ".join(parts).replace(" \n\n ", "\n\n")
    return text.strip()


def math_doc(rng):
    lines = []
    for _ in range(rng.randint(2, 5)):
        a, b = rng.randint(2, 99), rng.randint(2, 99)
        op = rng.choice(["+", "*", "-"])
        value = {"+": a + b, "*": a * b, "-": a - b}[op]
        lines += [f"What is {a} {op} {b}?", str(value)]
    return "\n".join(lines)


def stack_doc(rng):
    q = prose(rng, 300)
    a = prose(rng, 500)
    return f"Question: How should I interpret this report?\n{q}\n\nAnswer:\n{a}"


def github_doc(rng, i):
    body = prose(rng, 400)
    return (f"# project-{i}\n\n{body}\n\n## Usage\n\nRun `make install` and then call `tool --input data.csv`."
            f"\n\ndef main():\n    print('project {i} ready')\n")


def corpora(rng):
    docs = {}
    docs["ArXiv"] = [prose(rng, rng.randint(4000, 9000), SCIENCE) for _ in range(8)] + \
                    [prose(rng, rng.randint(600, 1500), SCIENCE) for _ in range(2)]
    docs["FreeLaw"] = [prose(rng, rng.randint(4000, 9000), LAW) for _ in range(8)] + \
                      [prose(rng, rng.randint(600, 1500), LAW) for _ in range(2)]
    docs["Wikipedia"] = [prose(rng, rng.randint(500, 1500)) for _ in range(10)]
    docs["StackExchange"] = [stack_doc(rng) for _ in range(10)]
    docs["DMMath"] = [math_doc(rng) for _ in range(10)]
    docs["GitHub"] = [github_doc(rng, i) for i in range(10)]
    return docs


def seed_task(rng, text, corpus, i):
    sentences = [s.strip() + "." for s in text.replace("\n", " ").split(".") if len(s.strip()) > 20]
    if corpus == "DMMath":
        lines = text.split("\n")
        return {"instruction": "Solve the following problem.", "input": lines[0], "output": lines[1]}
    first = sentences[0] if sentences else text[:80]
    kind = i % 3
    if kind == 0:
        return {"instruction": "Summarize the passage in one sentence.", "input": "", "output": first}
    if kind == 1:
        return {"instruction": "Rewrite the sentence in a more formal register.", "input": first, "output": first}
    return {"instruction": "Identify the main actor mentioned in the sentence.", "input": first,
            "output": first.split(" ")[0] + " " + first.split(" ")[1]}


def manual_seeds(rng):
    lines = []
    for corpus in ["ArXiv", "FreeLaw", "Wikipedia", "StackExchange", "DMMath", "GitHub"]:
        for i in range(20):
            if corpus == "DMMath":
                text = math_doc(rng)
                text = "\n".join(text.split("\n")[:2])
            elif corpus == "ArXiv":
                text = prose(rng, 400, SCIENCE)
            elif corpus == "FreeLaw":
                text = prose(rng, 400, LAW)
            else:
                text = prose(rng, 300)
            lines.append({"id": f"manual-{corpus}-{i}", "corpus": corpus, "view": "document_view",
                          "origin": "manual", "document": text, "task": seed_task(rng, text, corpus, i)})
    for i, task in enumerate(alpaca_tasks(random.Random(99))[:10]):
        doc = f"{task['input']}\n\n{task['output']}".strip()
        lines.append({"id": f"manual-task-view-{i}", "corpus": "custom:task-view", "view": "task_view",
                      "origin": "manual", "document": doc, "task": task})
    return lines


def alpaca_tasks(rng):
    tasks = []
    for i in range(60):
        s = sentence(rng)
        kind = i % 4
        if kind == 0:
            tasks.append({"instruction": "Summarize the following statement.", "input": s, "output": s[: s.find(" ", 30)] + "."})
        elif kind == 1:
            tasks.append({"instruction": "Write a short headline for the event.", "input": s,
                          "output": s.split(" ")[0] + " " + s.split(" ")[1] + " makes news"})
        elif kind == 2:
            a, b = rng.randint(2, 50), rng.randint(2, 50)
            tasks.append({"instruction": "Compute the sum.", "input": f"{a} + {b}", "output": str(a + b)})
        else:
            tasks.append({"instruction": "Explain why public records matter.", "input": "",
                          "output": "Public records let citizens check decisions.\nThey also preserve history."})
    return tasks


GOLDEN_CONF = """# Golden end-to-end run on the deterministic mock gateway.
run.seed = 42
run.created_at = 2024-01-01T00:00:00Z
gateway.backend = mock
gateway.model = synthetic-mock
gateway.max_parallel = 8
seeds.manual = seeds/manual.jsonl
seeds.invert_source = seeds/alpaca_like.jsonl
seeds.expand_documents = 30
seeds.invert_count = 50
""" + "".join(f"corpus.{c}.path = corpora/{c}.jsonl\n"
              for c in ["ArXiv", "DMMath", "FreeLaw", "GitHub", "StackExchange", "Wikipedia"])


def review_fixtures():
    """Judgment fixtures whose aggregates are worked out by hand in the tests."""
    cl_p = [1, 1, 1, 0, 1, 1, 1, 1, 0, 1]
    ha_i = [1, 0, 0, 0, 0, 1, None, None, None, None]
    ha_o = [0, 0, 1, 0, 0, 0, 0, 0, 0, 1]
    fl_i = [1, 1, 1, 1, 0, 1, None, None, None, None]
    fl_o = [1, 1, 1, 1, 1, 1, 1, 0, 1, 1]
    flag = lambda v: None if v is None else bool(v)
    mixed = [{"record_id": f"r{i}", "CL_P": flag(cl_p[i]), "HA_I": flag(ha_i[i]), "HA_O": flag(ha_o[i]),
              "FL_I": flag(fl_i[i]), "FL_O": flag(fl_o[i]), "annotator": "ann-1" if i < 6 else "ann-2",
              "timestamp": "2024-01-01T00:00:00Z"} for i in range(10)]
    clear = [{"record_id": f"c{i}", "CL_P": i < 47, "HA_I": None, "HA_O": False, "FL_I": None, "FL_O": True,
              "annotator": "ann-1", "timestamp": "2024-01-01T00:00:00Z"} for i in range(50)]
    # 69 wins, 29 ties, 5 losses for system "forge"; its side alternates.
    pairs = []
    verdicts = ["win"] * 69 + ["tie"] * 29 + ["lose"] * 5
    for i, outcome in enumerate(verdicts):
        subject_left = i % 2 == 0
        if outcome == "tie":
            verdict = "tie"
        elif (outcome == "win") == subject_left:
            verdict = "left_win"
        else:
            verdict = "right_win"
        left, right = ("forge", "baseline") if subject_left else ("baseline", "forge")
        pairs.append({"left_record_id": f"{left}/{i}", "right_record_id": f"{right}/{i}", "document_id": f"doc/{i}",
                      "verdict": verdict, "annotator": "ann-1", "timestamp": "2024-01-01T00:00:00Z",
                      "left_system": left, "right_system": right})
    return mixed, clear, pairs


def write_jsonl(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def main():
    rng = random.Random(2024)
    for corpus, texts in corpora(rng).items():
        write_jsonl(HERE / "corpora" / f"{corpus}.jsonl",
                    [{"text": t, "source": f"{corpus.lower()}-{i}"} for i, t in enumerate(texts)])
    write_jsonl(HERE / "seeds" / "manual.jsonl", manual_seeds(random.Random(7)))
    write_jsonl(HERE / "seeds" / "alpaca_like.jsonl", alpaca_tasks(random.Random(11)))
    mixed, clear, pairs = review_fixtures()
    write_jsonl(HERE / "review" / "judgments_mixed.jsonl", mixed)
    write_jsonl(HERE / "review" / "judgments_clarity_47_of_50.jsonl", clear)
    write_jsonl(HERE / "review" / "pairwise_103.jsonl", pairs)
    (HERE / "golden.conf").write_text(GOLDEN_CONF, encoding="utf-8")


if __name__ == "__main__":
    main()
