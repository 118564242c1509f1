"""Action decision policies: binary recognizability judgment -> action choice.

A policy sees the current observation, the extracted representation and
its overlay, and answers whether the state is recognizable. YES routes
to a preparation action, NO to an exploration action. Three
interchangeable implementations live in the submodules: a ground-truth
oracle (evaluation upper bound), an offline heuristic over recognizer
diagnostics, and a remote vision-endpoint client.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import yaml

YES_TOKEN = "ANSWER: YES"
NO_TOKEN = "ANSWER: NO"

PREPARE = "prepare"
EXPLORE = "explore"


@dataclass(frozen=True)
class Verdict:
    recognizable: bool
    reasoning: str = ""
    source: str = "heuristic"  # oracle | heuristic | remote | constant
    prompt: str | None = None
    raw_response: str | None = None

    def to_dict(self) -> dict:
        return {
            "recognizable": self.recognizable,
            "reasoning": self.reasoning,
            "source": self.source,
            "prompt": self.prompt,
            "raw_response": self.raw_response,
        }

    @staticmethod
    def from_dict(d: dict) -> "Verdict":
        return Verdict(
            recognizable=d["recognizable"],
            reasoning=d.get("reasoning", ""),
            source=d.get("source", "heuristic"),
            prompt=d.get("prompt"),
            raw_response=d.get("raw_response"),
        )


@dataclass(frozen=True)
class PromptTemplate:
    task: str
    input_data: str
    conditions: list[str]
    output_format: str

    def __post_init__(self):
        if YES_TOKEN not in self.output_format or NO_TOKEN not in self.output_format:
            raise ValueError(
                f"output_format must demand the literal tokens {YES_TOKEN!r} and {NO_TOKEN!r}"
            )

    def build_prompt(self) -> str:
        conditions = "\n".join(f"- {c}" for c in self.conditions)
        return (
            f"Task: {self.task}\n\n"
            f"Input data: {self.input_data}\n\n"
            f"Conditions for correct representation:\n{conditions}\n\n"
            f"Output format:\n{self.output_format}\n"
        )


def load_template(path) -> PromptTemplate:
    with open(path) as f:
        data = yaml.safe_load(f)
    return PromptTemplate(
        task=data["task"],
        input_data=data["input_data"],
        conditions=list(data["conditions"]),
        output_format=data["output_format"],
    )


@dataclass
class JudgmentContext:
    """Everything a policy may look at for one judgment.

    ``state`` is the raw simulator state; only the oracle policy may
    derive ground truth from it. Offline policies must restrict
    themselves to obs/rep/overlay.
    """

    state: object
    obs: object
    rep: object
    overlay: object


class Policy(Protocol):
    name: str

    def judge(self, ctx: JudgmentContext) -> Verdict: ...


def decide(verdict: Verdict) -> str:
    """YES -> prepare, NO -> explore."""
    return PREPARE if verdict.recognizable else EXPLORE


@dataclass
class ConstantPolicy:
    """Always answers the same; test/baseline plumbing."""

    answer: bool
    name: str = field(init=False)

    def __post_init__(self):
        self.name = "always_yes" if self.answer else "always_no"

    def judge(self, ctx: JudgmentContext) -> Verdict:
        return Verdict(recognizable=self.answer, source="constant")
