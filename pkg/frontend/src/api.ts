// Thin typed client for the learner API. Only learner endpoints are known
// here; admin surfaces are deliberately unreachable from the UI.

import type {
  Feedback,
  ImageRecord,
  Progress,
  QuizRequestConfig,
  QuizSetView,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function readDetail(response: Response): Promise<string> {
  try {
    const body = await response.json();
    if (typeof body?.detail === "string") return body.detail;
    return JSON.stringify(body);
  } catch {
    return response.statusText;
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    if (!response.ok) {
      throw new ApiError(response.status, await readDetail(response));
    }
    return (await response.json()) as T;
  }

  private postJson<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  async createSession(nativeLanguage = "en"): Promise<string> {
    const body = await this.postJson<{ session_id: string }>("/api/sessions", {
      native_language: nativeLanguage,
    });
    return body.session_id;
  }

  listImages(complexity?: string): Promise<ImageRecord[]> {
    const query = complexity ? `?complexity=${encodeURIComponent(complexity)}` : "";
    return this.request<ImageRecord[]>(`/api/images${query}`);
  }

  randomImage(): Promise<ImageRecord> {
    return this.request<ImageRecord>("/api/images/random");
  }

  addImageUrl(url: string, complexity?: string): Promise<ImageRecord> {
    return this.postJson<ImageRecord>("/api/images", { url, complexity });
  }

  uploadImage(file: File, complexity?: string): Promise<ImageRecord> {
    const form = new FormData();
    form.append("file", file);
    if (complexity) form.append("complexity", complexity);
    return this.request<ImageRecord>("/api/images", { method: "POST", body: form });
  }

  requestQuizSet(
    imageId: string,
    config: QuizRequestConfig,
    surpriseMe = false,
  ): Promise<QuizSetView> {
    return this.postJson<QuizSetView>(`/api/images/${imageId}/quizset`, {
      vision_profile: config.visionProfile,
      quiz_profile: config.quizProfile,
      condition: config.condition,
      n: config.n,
      surprise_me: surpriseMe,
    });
  }

  submitAnswer(quizId: string, sessionId: string, label: string): Promise<Feedback> {
    return this.postJson<Feedback>(`/api/quizzes/${quizId}/answer`, {
      session_id: sessionId,
      label,
    });
  }

  progress(sessionId: string): Promise<Progress> {
    return this.request<Progress>(`/api/sessions/${sessionId}/progress`);
  }

  imageFileUrl(imageId: string): string {
    return `${this.baseUrl}/api/images/${imageId}/file`;
  }
}
