/** DOM wiring for the annotator console. */

import { AnnotationClient } from "./api.js";
import { AnnotateFlow } from "./flow.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function localSelectionOffsets(container: HTMLElement): [number, number] | null {
  const sel = window.getSelection();
  if (!sel || sel.rangeCount === 0 || sel.isCollapsed) return null;
  const range = sel.getRangeAt(0);
  if (!container.contains(range.commonAncestorContainer)) return null;
  const pre = range.cloneRange();
  pre.selectNodeContents(container);
  pre.setEnd(range.startContainer, range.startOffset);
  const start = pre.toString().length;
  return [start, start + range.toString().length];
}

async function start(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const batchId = params.get("batch") ?? "";
  const annotatorId = params.get("annotator") ?? `anon-${Date.now() % 10000}`;
  const client = new AnnotationClient("");
  const flow = new AnnotateFlow(client, batchId, annotatorId);

  const contextBox = el<HTMLDivElement>("context");
  const questionBox = el<HTMLTextAreaElement>("question");
  const selectionBox = el<HTMLSpanElement>("selection");
  const messageBox = el<HTMLDivElement>("message");
  const progressBar = el<HTMLProgressElement>("progress");
  const progressText = el<HTMLSpanElement>("progress-text");
  const chunkNav = el<HTMLDivElement>("chunk-nav");
  const claimButton = el<HTMLButtonElement>("claim");
  const submitButton = el<HTMLButtonElement>("submit");
  const banner = el<HTMLDivElement>("banner");

  function render(): void {
    const total = flow.progress.pending + flow.progress.claimed +
      flow.progress.submitted + flow.progress.accepted;
    progressBar.max = Math.max(total, 1);
    progressBar.value = flow.progress.accepted;
    progressText.textContent = `${flow.progress.accepted}/${total}`;
    banner.hidden = !flow.complete;
    messageBox.textContent = flow.error ?? flow.notice ?? "";
    messageBox.className = flow.error ? "error" : "notice";
    contextBox.textContent = flow.chunkText();
    questionBox.value = flow.question;
    selectionBox.textContent = flow.selection
      ? `"${flow.selectedText()}" [${flow.selection.start},${flow.selection.end})`
      : "none";
    submitButton.disabled = !flow.canSubmit();
    claimButton.disabled = flow.current !== null;
    chunkNav.replaceChildren(
      ...flow.windows.map((w, i) => {
        const button = document.createElement("button");
        button.textContent = `chunk ${i + 1}`;
        button.disabled = i === flow.chunkIndex;
        button.onclick = () => { flow.gotoChunk(i); flow.selection = null; render(); };
        return button;
      }),
    );
  }

  claimButton.onclick = async () => {
    await flow.claimNext();
    render();
  };
  submitButton.onclick = async () => {
    await flow.submit();
    render();
  };
  questionBox.oninput = () => {
    flow.question = questionBox.value;
    render();
  };
  contextBox.onmouseup = () => {
    const local = localSelectionOffsets(contextBox);
    if (local) flow.selectLocal(local[0], local[1]);
    render();
  };

  await flow.refresh();
  render();
  setInterval(async () => { await flow.refresh(); render(); }, 5000);
}

start().catch((err) => {
  const box = document.getElementById("message");
  if (box) box.textContent = String(err);
});
