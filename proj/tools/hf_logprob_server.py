#!/usr/bin/env python3
"""Reference scoring server for the geoerasure wire protocol.

Serves a Hugging Face causal language model:

  GET  /info         model label and capabilities
  POST /score        {prompt, continuation, temperature} -> {tokens, total_logprob}
  POST /score_batch  {requests: [...]} -> {results: [...]} (each item echoes its id)

Temperature divides the logits at every position before the softmax. The
prompt is prefixed with the tokenizer's BOS token when it has one, otherwise
with its EOS token (the GPT-2 convention); /info reports which.

  python tools/hf_logprob_server.py --model gpt2 --port 8080
  GEOERASURE_BACKEND_URL=http://127.0.0.1:8080 build/tests/acceptance
"""

import argparse
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import torch
from transformers import AutoModelForCausalLM, AutoTokenizer


class Scorer:
    def __init__(self, model_name, device):
        self.tokenizer = AutoTokenizer.from_pretrained(model_name)
        self.model = AutoModelForCausalLM.from_pretrained(model_name).to(device).eval()
        self.device = device
        self.label = model_name
        self.lock = threading.Lock()
        start = self.tokenizer.bos_token_id
        name = "bos"
        if start is None:
            start = self.tokenizer.eos_token_id
            name = "eos"
        self.start_ids = [] if start is None else [start]
        self.bos_convention = "none" if start is None else f"{name} token prepended to the prompt"

    def info(self):
        return {
            "model_label": self.label,
            "supports_temperature": True,
            "supports_full_logits": True,
            "supports_batch": True,
            "bos_convention": self.bos_convention,
        }

    def score(self, prompt, continuation, temperature):
        if not continuation:
            raise ValueError("continuation must be non-empty")
        if not temperature > 0:
            raise ValueError("temperature must be positive")
        prompt_ids = self.start_ids + self.tokenizer.encode(prompt, add_special_tokens=False)
        cont_ids = self.tokenizer.encode(continuation, add_special_tokens=False)
        if not prompt_ids:
            raise ValueError("empty prompt and no BOS/EOS token to condition on")
        ids = torch.tensor([prompt_ids + cont_ids], device=self.device)
        with self.lock, torch.no_grad():
            logits = self.model(ids).logits[0].double()
        logprobs = torch.log_softmax(logits / temperature, dim=-1)
        tokens = []
        for k, token_id in enumerate(cont_ids):
            position = len(prompt_ids) + k - 1
            tokens.append({
                "text": self.tokenizer.decode([token_id]),
                "logprob": float(logprobs[position, token_id]),
            })
        return {"tokens": tokens, "total_logprob": sum(t["logprob"] for t in tokens)}


def make_handler(scorer):
    class Handler(BaseHTTPRequestHandler):
        def _reply(self, status, body):
            data = json.dumps(body).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def _score_one(self, item):
            result = scorer.score(item["prompt"], item["continuation"], float(item.get("temperature", 1.0)))
            if "id" in item:
                result["id"] = item["id"]
            return result

        def do_GET(self):
            if self.path.rstrip("/").endswith("/info"):
                self._reply(200, scorer.info())
            else:
                self._reply(404, {"error": "not found", "kind": "validation"})

        def do_POST(self):
            try:
                body = json.loads(self.rfile.read(int(self.headers.get("Content-Length", 0))))
                if self.path.rstrip("/").endswith("/score_batch"):
                    self._reply(200, {"results": [self._score_one(item) for item in body["requests"]]})
                elif self.path.rstrip("/").endswith("/score"):
                    self._reply(200, self._score_one(body))
                else:
                    self._reply(404, {"error": "not found", "kind": "validation"})
            except (KeyError, TypeError, ValueError) as e:
                self._reply(400, {"error": str(e), "kind": "validation"})

        def log_message(self, fmt, *args):
            pass

    return Handler


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--model", default="gpt2")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8080)
    parser.add_argument("--device", default="cuda" if torch.cuda.is_available() else "cpu")
    args = parser.parse_args()
    scorer = Scorer(args.model, args.device)
    server = ThreadingHTTPServer((args.host, args.port), make_handler(scorer))
    print(f"serving {args.model} on http://{args.host}:{server.server_address[1]}", flush=True)
    server.serve_forever()


if __name__ == "__main__":
    main()
