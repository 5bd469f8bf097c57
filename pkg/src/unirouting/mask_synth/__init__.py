from .prompt import TEMPLATE, TEMPLATE_VERSION, SynthesisTask, build_prompt, describe, make_task
from .provider import CandidateProgram, HTTPProvider, ProviderError, StubProvider, extract_program, request_candidates
from .sandbox import SandboxFailure, SandboxRunner
from .synth import ArtifactCache, MaskGeneratorArtifact, cache_key, synthesize
from .validate import ValidationResult, instance_view, validate_candidate

__all__ = [
    "TEMPLATE", "TEMPLATE_VERSION", "SynthesisTask", "build_prompt", "describe", "make_task",
    "CandidateProgram", "HTTPProvider", "ProviderError", "StubProvider", "extract_program",
    "request_candidates", "SandboxFailure", "SandboxRunner", "ArtifactCache", "MaskGeneratorArtifact",
    "cache_key", "synthesize", "ValidationResult", "instance_view", "validate_candidate",
]
