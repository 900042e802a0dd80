"""JSON-lines scoring backend for `models.backend_command`, built on transformers.

Reads one request per line on stdin:
  {"model_id", "mode", "prefix", "full_text", "slot_span": [start, end], "candidates": [...]}
and writes one line per request: a JSON array of
  {"candidate", "logprob", "token_count"}
or {"error": "..."}. Log probabilities are natural logs. `slot_span` holds
UTF-8 byte offsets into `full_text`.

masked_slot: the slot is replaced by the mask token and read with both
contexts; a candidate that is not a single known vocabulary unit gets logprob null.
continuation: the prefix, stripped of trailing whitespace, is the context; the
candidate keeps the separating space and its subword log probabilities are
summed. Text after the slot is ignored.

Usage:
  python tools/hf_scorer.py --model bert-base-uncased --mode masked_slot
  python tools/hf_scorer.py --model gpt2 --mode continuation
  python tools/hf_scorer.py --model bert-base-uncased --mode masked_slot --self-check
"""
import argparse
import json
import math
import sys

import torch
from transformers import AutoModelForCausalLM, AutoModelForMaskedLM, AutoTokenizer

SELF_CHECK_TEXT = "I like some, but not all, country music."
MASS_TOLERANCE = 1e-4


def split_bytes(text, span):
    raw = text.encode("utf-8")
    return raw[: span[0]].decode("utf-8"), raw[span[1] :].decode("utf-8")


class Masked:
    def __init__(self, name):
        self.tok = AutoTokenizer.from_pretrained(name)
        self.model = AutoModelForMaskedLM.from_pretrained(name).eval()
        if self.tok.mask_token is None:
            raise ValueError(f"{name} has no mask token")

    def slot_log_probs(self, left, right):
        text = left + self.tok.mask_token + right
        enc = self.tok(text, return_tensors="pt")
        pos = (enc["input_ids"][0] == self.tok.mask_token_id).nonzero()
        if len(pos) != 1:
            raise ValueError(f"expected one mask position, found {len(pos)}")
        with torch.no_grad():
            logits = self.model(**enc).logits[0, pos[0, 0]].double()
        return torch.log_softmax(logits, dim=-1)

    def score(self, req):
        left, right = split_bytes(req["full_text"], req["slot_span"])
        lps = self.slot_log_probs(left, right)
        out = []
        for c in req["candidates"]:
            ids = self.tok(c, add_special_tokens=False)["input_ids"]
            single = len(ids) == 1 and ids[0] != self.tok.unk_token_id
            lp = float(lps[ids[0]]) if single else None
            out.append({"candidate": c, "logprob": lp, "token_count": len(ids)})
        return out

    def mass(self, left, right):
        return float(self.slot_log_probs(left, right).exp().sum())


class Causal:
    def __init__(self, name):
        self.tok = AutoTokenizer.from_pretrained(name)
        self.model = AutoModelForCausalLM.from_pretrained(name).eval()

    def score(self, req):
        prefix = req["prefix"]
        context_text = prefix.rstrip()
        boundary = " " if context_text and len(context_text) < len(prefix) else ""
        context = self.tok(context_text, add_special_tokens=False)["input_ids"]
        if not context:
            raise ValueError("empty context")
        out = []
        for c in req["candidates"]:
            cand = self.tok(boundary + c, add_special_tokens=False)["input_ids"]
            if not cand:
                raise ValueError(f"candidate {c!r} has no tokens")
            ids = torch.tensor([context + cand])
            with torch.no_grad():
                logits = self.model(input_ids=ids).logits[0].double()
            lps = torch.log_softmax(logits, dim=-1)
            start = len(context) - 1
            lp = sum(float(lps[start + i, t]) for i, t in enumerate(cand))
            out.append({"candidate": c, "logprob": lp, "token_count": len(cand)})
        return out


def self_check(backend, mode):
    if mode != "masked_slot":
        print("self-check applies to masked_slot only", file=sys.stderr)
        return 0
    i = SELF_CHECK_TEXT.index("all")
    mass = backend.mass(SELF_CHECK_TEXT[:i], SELF_CHECK_TEXT[i + 3 :])
    ok = abs(mass - 1.0) <= MASS_TOLERANCE
    print(f"vocabulary mass at the slot: {mass:.8f} ({'ok' if ok else 'FAILED'})")
    return 0 if ok else 1


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--model", required=True, help="hub id or local directory")
    ap.add_argument("--mode", required=True, choices=["masked_slot", "continuation"])
    ap.add_argument("--self-check", action="store_true", help="check the masked distribution sums to one and exit")
    args = ap.parse_args()

    torch.manual_seed(0)
    backend = Masked(args.model) if args.mode == "masked_slot" else Causal(args.model)
    if args.self_check:
        return self_check(backend, args.mode)

    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            req = json.loads(line)
            if req.get("mode") != args.mode:
                raise ValueError(f"request mode {req.get('mode')!r} but backend runs {args.mode}")
            reply = backend.score(req)
            if any(r["logprob"] is not None and not math.isfinite(r["logprob"]) for r in reply):
                raise ValueError("non-finite log probability")
        except Exception as e:  # reported to the caller, which decides whether to retry
            reply = {"error": f"{type(e).__name__}: {e}"}
        sys.stdout.write(json.dumps(reply) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
