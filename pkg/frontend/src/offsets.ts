/**
 * Character-offset bookkeeping for answer highlighting.
 *
 * The context is rendered one chunk at a time (the same sliding token
 * windows the reader sees); a selection made inside the visible chunk is
 * mapped back to exact character offsets in the raw context so submissions
 * always round-trip through server-side span validation.
 */

export interface TokenSpan {
  start: number;
  end: number;
}

export interface ChunkWindow {
  tokenStart: number;
  tokenEnd: number; // exclusive
  charStart: number;
  charEnd: number;
}

/** Spans of maximal non-whitespace runs, matching the service tokenizer. */
export function tokenOffsets(text: string): TokenSpan[] {
  const spans: TokenSpan[] = [];
  const re = /\S+/g;
  let m: RegExpExecArray | null;
  while ((m = re.exec(text)) !== null) {
    spans.push({ start: m.index, end: m.index + m[0].length });
  }
  return spans;
}

/**
 * Sliding windows over the context tokens: each window holds up to
 * maxTokens tokens and consecutive windows overlap by exactly stride
 * tokens, except possibly the last, shorter one.
 */
export function chunkWindows(
  text: string,
  maxTokens: number,
  stride: number,
): ChunkWindow[] {
  if (stride >= maxTokens) {
    throw new Error(`stride ${stride} must be < maxTokens ${maxTokens}`);
  }
  const offs = tokenOffsets(text);
  if (offs.length === 0) return [];
  const windows: ChunkWindow[] = [];
  const step = maxTokens - stride;
  let start = 0;
  for (;;) {
    const end = Math.min(start + maxTokens, offs.length);
    windows.push({
      tokenStart: start,
      tokenEnd: end,
      charStart: offs[start].start,
      charEnd: offs[end - 1].end,
    });
    if (start + maxTokens >= offs.length) break;
    start += step;
  }
  return windows;
}

/** Chunk-local selection offsets mapped into the raw context. */
export function selectionToContextSpan(
  window: ChunkWindow,
  localStart: number,
  localEnd: number,
): [number, number] {
  return [window.charStart + localStart, window.charStart + localEnd];
}

/**
 * Shrink a selection so it carries no leading or trailing whitespace;
 * sloppy mouse selections otherwise fail the nonempty-slice expectation.
 */
export function trimSpan(
  context: string,
  start: number,
  end: number,
): [number, number] {
  let s = start;
  let e = end;
  while (s < e && /\s/.test(context[s])) s += 1;
  while (e > s && /\s/.test(context[e - 1])) e -= 1;
  return [s, e];
}

export interface ValidationProblem {
  field: "question" | "answer_start" | "answer_end";
  message: string;
}

/** Client-side mirror of the server's submission validation rules. */
export function validateSubmission(
  context: string,
  question: string,
  start: number,
  end: number,
): ValidationProblem[] {
  const problems: ValidationProblem[] = [];
  if (!question || question.trim().length === 0) {
    problems.push({ field: "question", message: "question must be nonempty" });
  }
  if (!Number.isInteger(start) || !Number.isInteger(end)) {
    problems.push({ field: "answer_start", message: "span offsets must be integers" });
  } else if (!(start >= 0 && start < end && end <= context.length)) {
    problems.push({
      field: "answer_end",
      message: `span (${start},${end}) out of bounds for context of length ${context.length}`,
    });
  }
  return problems;
}
