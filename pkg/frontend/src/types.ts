// Mirrors of the learner-facing API payloads. The server never includes the
// generated image caption or any correct-answer field in these shapes;
// correct answers arrive only inside Feedback after an attempt.

export interface ImageRecord {
  id: string;
  source: "upload" | "url";
  locator: string;
  sha256: string;
  complexity: "simple" | "moderate" | "complex";
  created_at: string;
}

export interface QuizOptionView {
  label: string; // a | b | c | d
  text_ar: string;
}

export interface QuizView {
  quiz_id: string;
  ordinal: number;
  stem: string;
  skill: string;
  options: QuizOptionView[];
}

export interface QuizSetView {
  quiz_set_id: string;
  image_id: string;
  quizzes: QuizView[];
  suggested_quiz_id?: string;
}

export interface Feedback {
  is_correct: boolean;
  correct_label: string;
  correct_text_ar: string;
  message_key: "correct" | "incorrect_show_answer";
}

export interface Progress {
  attempts: number;
  correct: number;
}

export interface QuizRequestConfig {
  visionProfile: string;
  quizProfile: string;
  condition: "prompted" | "bare";
  n: number;
}
