// Application wiring: VisionQuiz (browse stored images) and ImageIQ
// (upload a file or a URL from the permitted sites), then the quiz loop.

import { ApiClient, ApiError } from "./api.js";
import { ensureSession, type StorageLike } from "./session.js";
import type { ImageRecord, QuizRequestConfig, QuizView } from "./types.js";
import {
  clearError,
  renderError,
  renderFeedback,
  renderImageGrid,
  renderProgress,
  renderQuizSet,
} from "./views.js";

export interface AppOptions {
  config?: Partial<QuizRequestConfig>;
  storage?: StorageLike;
}

const DEFAULT_CONFIG: QuizRequestConfig = {
  visionProfile: "llama90v",
  quizProfile: "llama70",
  condition: "prompted",
  n: 2,
};

export class App {
  readonly config: QuizRequestConfig;
  sessionId = "";
  private pendingQuizSet = false;

  private readonly grid: HTMLElement;
  private readonly quizArea: HTMLElement;
  private readonly feedbackPanel: HTMLElement;
  private readonly progressBar: HTMLElement;
  private readonly errorBanner: HTMLElement;
  private readonly filterSelect: HTMLSelectElement;
  private readonly surpriseButton: HTMLButtonElement;
  private readonly uploadForm: HTMLFormElement;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    options: AppOptions = {},
  ) {
    this.config = { ...DEFAULT_CONFIG, ...options.config };
    this.storage = options.storage ?? window.localStorage;
    this.root.innerHTML = App.shell();
    this.grid = this.must("#image-grid");
    this.quizArea = this.must("#quiz-area");
    this.feedbackPanel = this.must("#feedback");
    this.progressBar = this.must("#progress");
    this.errorBanner = this.must("#error-banner");
    this.filterSelect = this.must("#complexity-filter") as HTMLSelectElement;
    this.surpriseButton = this.must("#surprise-me") as HTMLButtonElement;
    this.uploadForm = this.must("#imageiq-form") as HTMLFormElement;
  }

  private readonly storage: StorageLike;

  private must(selector: string): HTMLElement {
    const node = this.root.querySelector(selector);
    if (!node) throw new Error(`missing app element ${selector}`);
    return node as HTMLElement;
  }

  static shell(): string {
    return `
      <header class="topbar">
        <h1>Arabic Vision Quiz</h1>
        <div id="progress" class="progress"></div>
      </header>
      <div id="error-banner" class="error-banner hidden"></div>
      <main>
        <section class="panel" id="visionquiz-panel">
          <h2>VisionQuiz — pick an image</h2>
          <div class="controls">
            <label>Complexity
              <select id="complexity-filter">
                <option value="">all</option>
                <option value="simple">simple</option>
                <option value="moderate">moderate</option>
                <option value="complex">complex</option>
              </select>
            </label>
            <button id="surprise-me" type="button">Surprise me</button>
          </div>
          <div id="image-grid" class="image-grid"></div>
          <form id="imageiq-form" class="imageiq">
            <h2>ImageIQ — bring your own image</h2>
            <input type="url" name="url" placeholder="https://unsplash.com/..." />
            <input type="file" name="file" accept="image/*" />
            <button type="submit">Add image</button>
          </form>
        </section>
        <section class="panel">
          <h2>Questions</h2>
          <div id="quiz-area" class="quiz-area"></div>
          <div id="feedback" class="feedback"></div>
        </section>
      </main>
    `;
  }

  async start(): Promise<void> {
    this.sessionId = await ensureSession(this.api, this.storage);
    this.filterSelect.addEventListener("change", () => void this.refreshImages());
    this.surpriseButton.addEventListener("click", () => void this.surpriseMe());
    this.uploadForm.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submitImageForm();
    });
    await this.refreshImages();
    await this.refreshProgress();
  }

  async refreshImages(): Promise<void> {
    clearError(this.errorBanner);
    const complexity = this.filterSelect.value || undefined;
    const images = await this.api.listImages(complexity);
    renderImageGrid(this.grid, images, (id) => this.api.imageFileUrl(id), (image) =>
      void this.pickImage(image),
    );
  }

  async surpriseMe(): Promise<void> {
    clearError(this.errorBanner);
    try {
      await this.pickImage(await this.api.randomImage());
    } catch (error) {
      this.showError(error);
    }
  }

  async submitImageForm(): Promise<void> {
    clearError(this.errorBanner);
    const urlInput = this.uploadForm.elements.namedItem("url") as HTMLInputElement;
    const fileInput = this.uploadForm.elements.namedItem("file") as HTMLInputElement;
    try {
      let image: ImageRecord;
      if (fileInput.files && fileInput.files.length > 0) {
        image = await this.api.uploadImage(fileInput.files[0]);
      } else if (urlInput.value) {
        image = await this.api.addImageUrl(urlInput.value);
      } else {
        renderError(this.errorBanner, "Choose a file or paste an image URL first.");
        return;
      }
      this.uploadForm.reset();
      await this.refreshImages();
      await this.pickImage(image);
    } catch (error) {
      this.showError(error); // 4xx from the allowlist or dedupe surfaces here
    }
  }

  async pickImage(image: ImageRecord): Promise<void> {
    if (this.pendingQuizSet) return; // one in-flight request at a time
    this.pendingQuizSet = true;
    this.setBusy(true);
    this.feedbackPanel.replaceChildren();
    this.quizArea.replaceChildren();
    this.quizArea.append(Object.assign(document.createElement("p"), {
      className: "loading-note",
      textContent: "Generating questions…",
    }));
    try {
      const quizSet = await this.api.requestQuizSet(image.id, this.config, true);
      renderQuizSet(this.quizArea, quizSet, (quiz, label) => void this.answer(quiz, label));
    } catch (error) {
      this.quizArea.replaceChildren();
      this.showError(error);
    } finally {
      this.pendingQuizSet = false;
      this.setBusy(false);
    }
  }

  async answer(quiz: QuizView, label: string): Promise<void> {
    try {
      const feedback = await this.api.submitAnswer(quiz.quiz_id, this.sessionId, label);
      renderFeedback(this.feedbackPanel, feedback);
      await this.refreshProgress();
    } catch (error) {
      this.showError(error);
    }
  }

  async refreshProgress(): Promise<void> {
    renderProgress(this.progressBar, await this.api.progress(this.sessionId));
  }

  private setBusy(busy: boolean): void {
    this.surpriseButton.disabled = busy;
    for (const button of this.grid.querySelectorAll("button")) {
      (button as HTMLButtonElement).disabled = busy;
    }
  }

  private showError(error: unknown): void {
    if (error instanceof ApiError) {
      renderError(this.errorBanner, error.detail);
    } else {
      renderError(this.errorBanner, String(error));
    }
  }
}

export async function createApp(
  root: HTMLElement,
  api: ApiClient,
  options: AppOptions = {},
): Promise<App> {
  const app = new App(root, api, options);
  await app.start();
  return app;
}
