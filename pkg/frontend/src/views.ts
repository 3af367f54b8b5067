// DOM builders. Arabic text always renders inside dir="rtl" lang="ar"
// elements at enlarged size (see styles.css) so harakat stay legible, and
// option order a-d is never re-sorted by layout.

import type { Feedback, ImageRecord, Progress, QuizSetView, QuizView } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderImageGrid(
  container: HTMLElement,
  images: ImageRecord[],
  imageUrl: (id: string) => string,
  onPick: (image: ImageRecord) => void,
): void {
  container.replaceChildren();
  if (images.length === 0) {
    container.append(el("p", "empty-note", "No images in this category yet."));
    return;
  }
  for (const image of images) {
    const card = el("button", "image-card");
    card.type = "button";
    card.dataset.imageId = image.id;
    card.dataset.complexity = image.complexity;
    const thumb = el("img", "image-thumb") as HTMLImageElement;
    thumb.src = imageUrl(image.id);
    thumb.alt = `${image.complexity} image`;
    card.append(thumb, el("span", "image-tag", image.complexity));
    card.addEventListener("click", () => onPick(image));
    container.append(card);
  }
}

export function renderQuizSet(
  container: HTMLElement,
  quizSet: QuizSetView,
  onAnswer: (quiz: QuizView, label: string) => void,
): void {
  container.replaceChildren();
  const intro = el("p", "quiz-set-intro", "Pick whichever question you prefer:");
  container.append(intro);
  for (const quiz of quizSet.quizzes) {
    container.append(renderQuizCard(quiz, onAnswer, quiz.quiz_id === quizSet.suggested_quiz_id));
  }
}

export function renderQuizCard(
  quiz: QuizView,
  onAnswer: (quiz: QuizView, label: string) => void,
  suggested = false,
): HTMLElement {
  const card = el("section", suggested ? "quiz-card suggested" : "quiz-card");
  card.dataset.quizId = quiz.quiz_id;
  const heading = el("h3", "quiz-stem", quiz.stem);
  if (suggested) heading.append(el("span", "suggested-badge", " ★"));
  card.append(heading);
  if (quiz.skill !== "untagged") {
    card.append(el("p", "quiz-skill", quiz.skill));
  }
  const list = el("div", "options");
  for (const option of quiz.options) {
    const button = el("button", "option");
    button.type = "button";
    button.dataset.label = option.label;
    const label = el("span", "option-label", `${option.label})`);
    const text = el("span", "option-text arabic", option.text_ar);
    text.dir = "rtl";
    text.lang = "ar";
    button.append(label, text);
    button.addEventListener("click", () => onAnswer(quiz, option.label));
    list.append(button);
  }
  card.append(list);
  return card;
}

export function renderFeedback(panel: HTMLElement, feedback: Feedback): void {
  panel.replaceChildren();
  panel.className = feedback.is_correct ? "feedback correct" : "feedback incorrect";
  if (feedback.is_correct) {
    panel.append(el("p", "feedback-line", "Correct!"));
  } else {
    panel.append(el("p", "feedback-line", "Not quite. The correct answer is:"));
  }
  const word = el("p", "correct-word arabic", `${feedback.correct_label}) ${feedback.correct_text_ar}`);
  word.dir = "rtl";
  word.lang = "ar";
  word.dataset.role = "correct-word";
  panel.append(word);
}

export function renderProgress(bar: HTMLElement, progress: Progress): void {
  bar.replaceChildren();
  const counter = el(
    "span",
    "progress-counter",
    `${progress.correct} / ${progress.attempts} correct`,
  );
  counter.dataset.attempts = String(progress.attempts);
  counter.dataset.correct = String(progress.correct);
  const track = el("div", "progress-track");
  const fill = el("div", "progress-fill");
  const percent = progress.attempts === 0 ? 0 : (100 * progress.correct) / progress.attempts;
  fill.style.width = `${percent}%`;
  track.append(fill);
  bar.append(counter, track);
}

export function renderError(banner: HTMLElement, message: string): void {
  banner.replaceChildren(el("p", "error-text", message));
  banner.classList.remove("hidden");
}

export function clearError(banner: HTMLElement): void {
  banner.replaceChildren();
  banner.classList.add("hidden");
}
