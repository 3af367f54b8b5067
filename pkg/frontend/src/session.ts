// Anonymous session token kept client-side; no login.

import type { ApiClient } from "./api.js";

const STORAGE_KEY = "arabiq.session_id";

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export async function ensureSession(
  api: ApiClient,
  storage: StorageLike,
): Promise<string> {
  const existing = storage.getItem(STORAGE_KEY);
  if (existing) {
    try {
      await api.progress(existing); // still valid on this server?
      return existing;
    } catch {
      // stale token (server reset); fall through and mint a new one
    }
  }
  const sessionId = await api.createSession();
  storage.setItem(STORAGE_KEY, sessionId);
  return sessionId;
}
