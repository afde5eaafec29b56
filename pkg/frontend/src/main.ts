import { createApi } from "./api.js";
import { mountApp } from "./app.js";

const params = new URLSearchParams(window.location.hash.slice(1));
const api = createApi({ token: params.get("token") ?? undefined });
const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");
mountApp(root, { api, reviewer: params.get("reviewer") ?? "reviewer" });
