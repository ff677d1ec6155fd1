import { SynthesisClient } from "./api.js";
import { mountApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const serviceUrl = params.get("service") ?? "http://127.0.0.1:8077";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

const handles = mountApp(root, new SynthesisClient(serviceUrl));

const health = document.getElementById("health");
if (health) {
  new SynthesisClient(serviceUrl)
    .health()
    .then((h) => (health.textContent = `service: ${h.status}`))
    .catch(() => (health.textContent = "service: unreachable"));
}

// handy for manual poking from the devtools console
(window as unknown as Record<string, unknown>).sketchface = handles;
