// Browser entry point: mount the app on #app against the same-origin API.

import { ApiClient } from "./api.js";
import { createApp } from "./app.js";

document.addEventListener("DOMContentLoaded", () => {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app mount point");
  void createApp(root, new ApiClient(""));
});
