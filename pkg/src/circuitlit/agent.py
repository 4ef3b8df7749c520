"""The reasoning loop: thought -> action -> observation, until an answer.

The model speaks a fixed line grammar:

    Thought: <free text>
    Action: <tool name>
    Action Input: <tool input>

or terminates with

    Thought: <free text>
    Final Answer: <answer>

The first ``Action:`` or ``Final Answer:`` directive wins. Output that fits
neither becomes an in-band parse failure whose corrective observation is fed
back to the model; tool errors are likewise captured into observations and
never escape the loop.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .errors import ProviderError
from .providers import ChatProvider

GRAMMAR_VERSION = "react-v1"
PARSE_FAILURE_TOOL = "parse_failure"
CORRECTIVE_OBSERVATION = "Respond using the Thought/Action grammar."
TRUNCATION_MARKER = "…[truncated]"

SYSTEM_GRAMMAR = f"""You answer questions by thinking and using tools. [{GRAMMAR_VERSION}]
Use the Thought/Action grammar, one directive per line:
Thought: reason about what to do next
Action: <tool name>
Action Input: <input for the tool>
Then stop and wait for an Observation. When you can answer, emit:
Thought: final reasoning
Final Answer: <your answer, citing sources like [1]>

Available tools:
"""


@dataclass(frozen=True)
class Action:
    tool_name: str
    tool_input: str


@dataclass(frozen=True)
class FinalAnswer:
    text: str


@dataclass(frozen=True)
class Citation:
    doc_id: str
    record_id: str
    modality: str
    image_path: str | None = None

    def to_json(self) -> dict:
        out = {"doc_id": self.doc_id, "record_id": self.record_id, "modality": self.modality}
        if self.image_path:
            out["image_path"] = self.image_path
        return out


@dataclass(frozen=True)
class AgentStep:
    step_no: int
    thought: str
    action: Action | None = None
    observation: str | None = None
    observation_full: str | None = None

    def to_json(self) -> dict:
        return {
            "step_no": self.step_no,
            "thought": self.thought,
            "action": (
                {"tool_name": self.action.tool_name, "tool_input": self.action.tool_input}
                if self.action
                else None
            ),
            "observation": self.observation,
            "observation_full": self.observation_full,
        }


@dataclass
class Transcript:
    session_id: str
    query: str
    steps: list[AgentStep]
    final_answer: str
    citations: list[Citation]
    terminated_by: str  # answer | step_limit | error

    SCHEMA_VERSION = 1

    def to_json(self) -> dict:
        return {
            "schema_version": self.SCHEMA_VERSION,
            "session_id": self.session_id,
            "query": self.query,
            "steps": [s.to_json() for s in self.steps],
            "final_answer": self.final_answer,
            "citations": [c.to_json() for c in self.citations],
            "terminated_by": self.terminated_by,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Transcript":
        steps = []
        for s in data["steps"]:
            action = None
            if s.get("action"):
                action = Action(s["action"]["tool_name"], s["action"]["tool_input"])
            steps.append(
                AgentStep(
                    step_no=s["step_no"],
                    thought=s.get("thought", ""),
                    action=action,
                    observation=s.get("observation"),
                    observation_full=s.get("observation_full"),
                )
            )
        citations = [
            Citation(
                doc_id=c["doc_id"],
                record_id=c["record_id"],
                modality=c["modality"],
                image_path=c.get("image_path"),
            )
            for c in data.get("citations", [])
        ]
        return cls(
            session_id=data["session_id"],
            query=data["query"],
            steps=steps,
            final_answer=data.get("final_answer", ""),
            citations=citations,
            terminated_by=data.get("terminated_by", "answer"),
        )


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    input_schema: str = "free text"


@dataclass
class ToolResult:
    text: str
    citations: list[Citation] = field(default_factory=list)


ToolFn = Callable[[str], "ToolResult | str"]


class ToolRegistry:
    def __init__(self) -> None:
        self._tools: dict[str, tuple[ToolSpec, ToolFn]] = {}

    def register(self, spec: ToolSpec, fn: ToolFn) -> None:
        if spec.name in self._tools:
            raise ValueError(f"tool {spec.name} already registered")
        self._tools[spec.name] = (spec, fn)

    def names(self) -> list[str]:
        return list(self._tools)

    def get(self, name: str) -> tuple[ToolSpec, ToolFn] | None:
        return self._tools.get(name)

    def spec_block(self) -> str:
        lines = []
        for spec, _ in self._tools.values():
            lines.append(f"- {spec.name}: {spec.description} (input: {spec.input_schema})")
        return "\n".join(lines)

    def __len__(self) -> int:
        return len(self._tools)


@dataclass(frozen=True)
class SessionLimits:
    max_steps: int = 10
    max_tool_output_chars: int = 4000


def parse_model_output(text: str) -> Action | FinalAnswer:
    """Parse one model turn; the first matching directive wins."""
    lines = text.splitlines()
    for i, line in enumerate(lines):
        stripped = line.strip()
        if stripped.startswith("Final Answer:"):
            rest = stripped[len("Final Answer:") :].strip()
            tail = "\n".join(lines[i + 1 :]).strip()
            answer = f"{rest}\n{tail}".strip() if tail else rest
            return FinalAnswer(answer)
        if stripped.startswith("Action:"):
            tool = stripped[len("Action:") :].strip()
            payload_lines: list[str] = []
            for follow in lines[i + 1 :]:
                fs = follow.strip()
                if fs.startswith("Action Input:"):
                    payload_lines.append(fs[len("Action Input:") :].strip())
                elif fs.startswith(("Action:", "Final Answer:", "Thought:", "Observation:")):
                    break
                elif payload_lines:
                    payload_lines.append(follow.rstrip())
            return Action(tool_name=tool, tool_input="\n".join(payload_lines).strip())
    return Action(tool_name=PARSE_FAILURE_TOOL, tool_input=text.strip()[:200])


def extract_thought(text: str) -> str:
    """The first Thought block, up to the next directive."""
    lines = text.splitlines()
    collected: list[str] = []
    in_thought = False
    for line in lines:
        stripped = line.strip()
        if stripped.startswith("Thought:"):
            if in_thought:
                break
            collected.append(stripped[len("Thought:") :].strip())
            in_thought = True
        elif stripped.startswith(("Action:", "Action Input:", "Final Answer:")):
            break
        elif in_thought:
            collected.append(line.rstrip())
    return "\n".join(collected).strip()


def dispatch(action: Action, registry: ToolRegistry) -> ToolResult:
    """Execute a tool action; failures become observations, never exceptions."""
    if action.tool_name == PARSE_FAILURE_TOOL:
        return ToolResult(CORRECTIVE_OBSERVATION)
    entry = registry.get(action.tool_name)
    if entry is None:
        return ToolResult(
            f"unknown tool {action.tool_name}; available: {json.dumps(registry.names())}"
        )
    _, fn = entry
    try:
        result = fn(action.tool_input)
    except Exception as exc:  # containment contract: errors stay in-band
        return ToolResult(f"tool error: {type(exc).__name__}: {exc}")
    if isinstance(result, str):
        return ToolResult(result)
    return result


def _truncate(text: str, limit: int) -> tuple[str, str | None]:
    if len(text) <= limit:
        return text, None
    return text[: limit - len(TRUNCATION_MARKER)] + TRUNCATION_MARKER, text


def run_session(
    query: str,
    registry: ToolRegistry,
    llm: ChatProvider,
    limits: SessionLimits = SessionLimits(),
    session_id: str | None = None,
    on_event: Callable[[str, object], None] | None = None,
) -> Transcript:
    """Run the loop until a final answer, the step limit, or a provider error."""
    if len(registry) == 0:
        raise ValueError("registry is empty")
    session_id = session_id or uuid.uuid4().hex
    system = SYSTEM_GRAMMAR + registry.spec_block()
    messages: list[dict[str, str]] = [
        {"role": "system", "content": system},
        {"role": "user", "content": query},
    ]
    steps: list[AgentStep] = []
    citations: list[Citation] = []
    seen_citations: set[str] = set()
    final_answer = ""
    terminated_by = "step_limit"

    def emit(kind: str, payload) -> None:
        if on_event is not None:
            on_event(kind, payload)

    for step_no in range(1, limits.max_steps + 1):
        try:
            raw = llm.complete(messages)
        except ProviderError as exc:
            terminated_by = "error"
            step = AgentStep(step_no=step_no, thought=f"provider error: {exc}")
            steps.append(step)
            emit("step", step)
            break
        thought = extract_thought(raw)
        parsed = parse_model_output(raw)
        if isinstance(parsed, FinalAnswer):
            final_answer = parsed.text
            terminated_by = "answer"
            step = AgentStep(step_no=step_no, thought=thought)
            steps.append(step)
            emit("step", step)
            break
        result = dispatch(parsed, registry)
        for citation in result.citations:
            if citation.record_id not in seen_citations:
                seen_citations.add(citation.record_id)
                citations.append(citation)
        observation, full = _truncate(result.text, limits.max_tool_output_chars)
        step = AgentStep(
            step_no=step_no,
            thought=thought,
            action=parsed,
            observation=observation,
            observation_full=full,
        )
        steps.append(step)
        emit("step", step)
        messages.append({"role": "assistant", "content": raw})
        messages.append({"role": "user", "content": f"Observation: {observation}"})

    if terminated_by == "step_limit":
        for step in reversed(steps):
            if step.observation:
                final_answer = step.observation[:300]
                break

    transcript = Transcript(
        session_id=session_id,
        query=query,
        steps=steps,
        final_answer=final_answer,
        citations=citations,
        terminated_by=terminated_by,
    )
    emit("final", transcript)
    return transcript


def validate_transcript(transcript: Transcript, max_steps: int | None = None) -> list[str]:
    """Check the step-alternation grammar; returns violations (empty = valid)."""
    problems = []
    for i, step in enumerate(transcript.steps):
        if step.step_no != i + 1:
            problems.append(f"step {i}: step_no {step.step_no} != {i + 1}")
        terminal = i == len(transcript.steps) - 1
        if step.action is not None and step.observation is None:
            problems.append(f"step {step.step_no}: action without observation")
        if step.action is None and step.observation is not None:
            problems.append(f"step {step.step_no}: observation without action")
        if step.action is None and not terminal:
            problems.append(f"step {step.step_no}: non-terminal step without action")
    if transcript.terminated_by == "answer":
        if not transcript.final_answer:
            problems.append("terminated_by=answer but final_answer empty")
        if transcript.steps and transcript.steps[-1].action is not None:
            problems.append("terminated_by=answer but last step is an action")
    if max_steps is not None and len(transcript.steps) > max_steps:
        problems.append(f"{len(transcript.steps)} steps exceed max_steps={max_steps}")
    return problems
