"""HTTP service around a trained bundle: generation, path tracing and
evaluation. The CLI `serve` subcommand runs this app under uvicorn."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import config as config_mod
from .grounding import EmptyGrounding
from .pipeline import GenerationBundle, evaluate_files, run_config_extraction


class GenerateRequest(BaseModel):
    text: str
    beam: int = Field(default=3, ge=1)
    max_len: int = Field(default=32, ge=1)
    nbest: int = Field(default=1, ge=1)


class HypothesisOut(BaseModel):
    rank: int
    logprob: float
    text: str


class GenerateResponse(BaseModel):
    hypotheses: list[HypothesisOut]


class TraceRequest(BaseModel):
    text: str
    top_k: int = Field(default=3, ge=1)
    max_len: int = Field(default=32, ge=1)


class TraceStep(BaseModel):
    step: int
    token: str
    gate: float
    paths: str


class TraceResponse(BaseModel):
    steps: list[TraceStep]


class EvalRequest(BaseModel):
    hypotheses: list[str]
    references: list[str]           # tab-separated for multi-reference
    bleu_orders: list[int] = [1, 2]
    distinct_orders: list[int] = [2, 3]


class EvalResponse(BaseModel):
    scores: dict[str, float]


def create_app(checkpoint_path: str, graph_path: str,
               config_path: str | None = None,
               bundle: GenerationBundle | None = None) -> FastAPI:
    if bundle is None:
        cfg = config_mod.load(config_path)
        bundle = GenerationBundle.load(checkpoint_path, graph_path,
                                       extraction=run_config_extraction(cfg))
    app = FastAPI(title="hopgen", version="0.1.0")

    @app.get("/health")
    def health():
        return {"status": "ok", "vocab_size": bundle.model.cfg.vocab_size,
                "concepts": len(bundle.kg.concepts)}

    @app.post("/generate", response_model=GenerateResponse)
    def generate(req: GenerateRequest):
        try:
            hyps = bundle.generate(req.text, beam=req.beam, max_len=req.max_len)
        except EmptyGrounding:
            raise HTTPException(status_code=422, detail="no concepts matched in input")
        out = [HypothesisOut(rank=i + 1, logprob=h.logprob,
                             text=bundle.hypothesis_text(h))
               for i, h in enumerate(hyps[:req.nbest])]
        return GenerateResponse(hypotheses=out)

    @app.post("/trace", response_model=TraceResponse)
    def trace(req: TraceRequest):
        try:
            records = bundle.trace(req.text, top_k=req.top_k, max_len=req.max_len)
        except EmptyGrounding:
            raise HTTPException(status_code=422, detail="no concepts matched in input")
        return TraceResponse(steps=[TraceStep(**r) for r in records])

    @app.post("/eval", response_model=EvalResponse)
    def eval_(req: EvalRequest):
        try:
            scores = evaluate_files(req.hypotheses, req.references,
                                    bleu_orders=tuple(req.bleu_orders),
                                    distinct_orders=tuple(req.distinct_orders))
        except ValueError as e:
            raise HTTPException(status_code=422, detail=str(e))
        return EvalResponse(scores=scores)

    return app
