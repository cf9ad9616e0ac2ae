#!/usr/bin/env python3
# Copyright (C) 2026 The otfedit Authors
# SPDX-License-Identifier: Apache-2.0
"""Reference model host for the otfedit remote backends.

Serves the JSON protocol in docs/model_host_protocol.md with diffusers and
transformers checkpoints. Requests are handled one at a time.

    python tools/model_host.py --port 8765 --device cuda
"""

import argparse
import base64
import io
import json
import logging
import sys
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np

log = logging.getLogger("model_host")

DEFAULT_MODELS = {
    "diffusion": "CompVis/stable-diffusion-v1-4",
    "captioner": "Salesforce/blip-image-captioning-base",
    "text_encoder": "openai/clip-vit-large-patch14",
    "language_model": "microsoft/phi-2",
    "evaluator": "openai/clip-vit-base-patch32",
}


def tensor_to_json(array):
    array = np.ascontiguousarray(array, dtype="<f4")
    return {"shape": list(array.shape), "data": base64.b64encode(array.tobytes()).decode("ascii")}


def tensor_from_json(obj):
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<f4").reshape(obj["shape"])


def image_from_json(text):
    from PIL import Image

    return Image.open(io.BytesIO(base64.b64decode(text))).convert("RGB")


def image_to_json(image):
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


class Models:
    def __init__(self, ids, device, precision):
        import torch
        from diffusers import AutoencoderKL, DDIMScheduler, UNet2DConditionModel
        from transformers import (
            AutoModelForCausalLM,
            AutoTokenizer,
            BlipForConditionalGeneration,
            BlipProcessor,
            CLIPModel,
            CLIPProcessor,
            CLIPTextModel,
            CLIPTokenizer,
        )

        self.torch = torch
        self.ids = ids
        self.device = device
        self.dtype = torch.float16 if precision == "fp16" and device != "cpu" else torch.float32

        log.info("loading %s", ids["diffusion"])
        self.vae = AutoencoderKL.from_pretrained(ids["diffusion"], subfolder="vae", torch_dtype=self.dtype).to(device)
        self.unet = UNet2DConditionModel.from_pretrained(
            ids["diffusion"], subfolder="unet", torch_dtype=self.dtype
        ).to(device)
        self.scheduler = DDIMScheduler.from_pretrained(ids["diffusion"], subfolder="scheduler")
        self.latent_scale = self.vae.config.scaling_factor
        self.resolution = self.unet.config.sample_size * 2 ** (len(self.vae.config.block_out_channels) - 1)

        log.info("loading %s", ids["text_encoder"])
        self.tokenizer = CLIPTokenizer.from_pretrained(ids["text_encoder"])
        self.text_encoder = CLIPTextModel.from_pretrained(ids["text_encoder"], torch_dtype=self.dtype).to(device)

        log.info("loading %s", ids["captioner"])
        self.blip_processor = BlipProcessor.from_pretrained(ids["captioner"])
        self.blip = BlipForConditionalGeneration.from_pretrained(ids["captioner"], torch_dtype=self.dtype).to(device)

        log.info("loading %s", ids["language_model"])
        self.lm_tokenizer = AutoTokenizer.from_pretrained(ids["language_model"])
        self.lm = AutoModelForCausalLM.from_pretrained(ids["language_model"], torch_dtype=self.dtype).to(device)

        log.info("loading %s", ids["evaluator"])
        self.clip_processor = CLIPProcessor.from_pretrained(ids["evaluator"])
        self.clip = CLIPModel.from_pretrained(ids["evaluator"]).to(device)

    def info(self):
        alphas = self.scheduler.alphas_cumprod.double().tolist()
        return {
            "models": self.ids,
            "text_encoder": {
                "context_length": self.tokenizer.model_max_length,
                "width": self.text_encoder.config.hidden_size,
            },
            "diffusion": {
                "resolution": self.resolution,
                "alphas_cumprod": alphas,
                "steps_offset": int(self.scheduler.config.get("steps_offset", 0)) or 1,
                "set_alpha_to_one": bool(self.scheduler.config.get("set_alpha_to_one", False)),
            },
            "evaluator": {
                "preprocessing": "CLIPProcessor default: resize shortest side to %d, center crop, normalize"
                % self.clip_processor.image_processor.crop_size["height"]
            },
        }

    def caption(self, body):
        torch = self.torch
        inputs = self.blip_processor(images=image_from_json(body["image"]), return_tensors="pt").to(
            self.device, self.dtype
        )
        with torch.no_grad():
            out = self.blip.generate(**inputs, max_new_tokens=40)
        return {"text": self.blip_processor.decode(out[0], skip_special_tokens=True).strip()}

    def encode_text(self, body):
        torch = self.torch
        ids = self.tokenizer(
            body["text"],
            padding="max_length",
            max_length=self.tokenizer.model_max_length,
            truncation=True,
            return_tensors="pt",
        ).input_ids.to(self.device)
        with torch.no_grad():
            hidden = self.text_encoder(ids)[0][0]
        return {"tensor": tensor_to_json(hidden.float().cpu().numpy())}

    def complete(self, body):
        torch = self.torch
        torch.manual_seed(int(body["seed"]) % (2**63))
        inputs = self.lm_tokenizer(body["prompt"], return_tensors="pt").to(self.device)
        temperature = float(body["temperature"])
        kwargs = {"max_new_tokens": int(body["max_new_tokens"]), "pad_token_id": self.lm_tokenizer.eos_token_id}
        if temperature > 0:
            kwargs.update(do_sample=True, temperature=temperature)
        else:
            kwargs.update(do_sample=False)
        with torch.no_grad():
            out = self.lm.generate(**inputs, **kwargs)
        text = self.lm_tokenizer.decode(out[0][inputs.input_ids.shape[1]:], skip_special_tokens=True)
        for stop in body.get("stop", []):
            cut = text.find(stop)
            if stop and cut >= 0:
                text = text[:cut]
        return {"text": text}

    def vae_encode(self, body):
        torch = self.torch
        image = np.asarray(image_from_json(body["image"]), dtype=np.float32) / 127.5 - 1.0
        pixels = torch.from_numpy(image).permute(2, 0, 1)[None].to(self.device, self.dtype)
        with torch.no_grad():
            latent = self.vae.encode(pixels).latent_dist.mean * self.latent_scale
        return {"tensor": tensor_to_json(latent[0].float().cpu().numpy())}

    def vae_decode(self, body):
        from PIL import Image

        torch = self.torch
        latent = torch.from_numpy(tensor_from_json(body["tensor"]).copy())[None].to(self.device, self.dtype)
        with torch.no_grad():
            pixels = self.vae.decode(latent / self.latent_scale).sample[0]
        array = ((pixels.float().clamp(-1, 1) + 1) * 127.5).round().byte().permute(1, 2, 0).cpu().numpy()
        return {"image": image_to_json(Image.fromarray(array))}

    def unet(self, body):
        torch = self.torch
        latent = torch.from_numpy(tensor_from_json(body["latent"]).copy())[None].to(self.device, self.dtype)
        embedding = torch.from_numpy(tensor_from_json(body["embedding"]).copy())[None].to(self.device, self.dtype)
        with torch.no_grad():
            eps = self.unet(latent, int(body["timestep"]), encoder_hidden_states=embedding).sample[0]
        return {"tensor": tensor_to_json(eps.float().cpu().numpy())}

    def eval_image(self, body):
        torch = self.torch
        inputs = self.clip_processor(images=image_from_json(body["image"]), return_tensors="pt").to(self.device)
        with torch.no_grad():
            v = self.clip.get_image_features(**inputs)[0]
        return {"vector": v.double().cpu().tolist()}

    def eval_text(self, body):
        torch = self.torch
        inputs = self.clip_processor(text=[body["text"]], return_tensors="pt", padding=True, truncation=True).to(
            self.device
        )
        with torch.no_grad():
            v = self.clip.get_text_features(**inputs)[0]
        return {"vector": v.double().cpu().tolist()}


def make_handler(models):
    routes = {
        "/caption": models.caption,
        "/encode_text": models.encode_text,
        "/complete": models.complete,
        "/vae/encode": models.vae_encode,
        "/vae/decode": models.vae_decode,
        "/unet": models.unet,
        "/eval/image": models.eval_image,
        "/eval/text": models.eval_text,
    }

    class Handler(BaseHTTPRequestHandler):
        def reply(self, status, payload):
            data = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            if self.path == "/info":
                self.reply(200, models.info())
            else:
                self.reply(404, {"error": "no such endpoint"})

        def do_POST(self):
            route = routes.get(self.path)
            if route is None:
                self.reply(404, {"error": "no such endpoint"})
                return
            try:
                body = json.loads(self.rfile.read(int(self.headers.get("Content-Length", 0))))
                self.reply(200, route(body))
            except (KeyError, ValueError) as e:
                self.reply(400, {"error": "bad request: %s" % e})
            except Exception as e:  # noqa: BLE001
                log.exception("%s failed", self.path)
                self.reply(500, {"error": str(e)})

        def log_message(self, fmt, *args):
            log.info(fmt, *args)

    return Handler


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8765)
    parser.add_argument("--device", default="cuda")
    parser.add_argument("--precision", choices=["fp16", "fp32"], default="fp16")
    for role, default in DEFAULT_MODELS.items():
        parser.add_argument("--" + role.replace("_", "-"), default=default, help="checkpoint for the %s" % role)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")

    ids = {role: getattr(args, role) for role in DEFAULT_MODELS}
    models = Models(ids, args.device, args.precision)
    server = HTTPServer((args.host, args.port), make_handler(models))
    log.info("serving on http://%s:%d", args.host, args.port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
