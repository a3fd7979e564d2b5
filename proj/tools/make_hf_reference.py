"""Regenerates tests/data/hf_* reference fixtures.

Builds tiny randomly initialised GPT-2 and LLaMA models with Hugging Face
transformers, saves them as safetensors + config.json, and records the
next-token distribution for a fixed prompt so the C++ engine can be checked
against an external implementation of the same architectures.
"""
import json
import pathlib

import torch
from safetensors.torch import save_file
from transformers import GPT2Config, GPT2LMHeadModel, LlamaConfig, LlamaForCausalLM

OUT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "data"
IDS = [5, 17, 2, 40, 33, 9, 1]


def dump(name, model, config):
    model.eval()
    d = OUT / name
    d.mkdir(parents=True, exist_ok=True)
    state = {k: v.contiguous() for k, v in model.state_dict().items() if not k.endswith(".attn.bias")}
    if name.startswith("hf_gpt2"):
        state = {k: v for k, v in state.items() if k != "lm_head.weight"}
    save_file(state, str(d / "model.safetensors"))
    (d / "config.json").write_text(json.dumps(config.to_dict(), indent=1, default=str))
    with torch.no_grad():
        logits = model(torch.tensor([IDS])).logits[0, -1].double()
    probs = torch.softmax(logits, -1).tolist()
    (d / "expected.json").write_text(json.dumps({"ids": IDS, "probs": probs}))


torch.manual_seed(0)
gcfg = GPT2Config(n_layer=2, n_head=2, n_embd=16, n_positions=32, vocab_size=64,
                  activation_function="gelu_new", initializer_range=0.3)
dump("hf_gpt2_tiny", GPT2LMHeadModel(gcfg), gcfg)

torch.manual_seed(1)
lcfg = LlamaConfig(num_hidden_layers=2, num_attention_heads=2, num_key_value_heads=2,
                   hidden_size=16, intermediate_size=40, vocab_size=64,
                   max_position_embeddings=32, rms_norm_eps=1e-6, initializer_range=0.3,
                   tie_word_embeddings=False)
dump("hf_llama_tiny", LlamaForCausalLM(lcfg), lcfg)
