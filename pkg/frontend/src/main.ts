/** Browser bootstrap: runtime config, token persistence, render loop. */

import { ApiClient } from "./api";
import { Controller } from "./controller";
import { render } from "./render";

declare global {
  interface Window {
    QUADFUSE_API_BASE?: string;
    QUADFUSE_TOKEN?: string;
  }
}

const TOKEN_KEY = "quadfuse_token";

function main(): void {
  const root = document.getElementById("app");
  if (root === null) throw new Error("missing #app mount point");
  const base = window.QUADFUSE_API_BASE ?? "";
  const ctl = new Controller((token) => new ApiClient(base, token), {
    onChange: () => render(root, ctl),
    onToken: (token) => window.sessionStorage.setItem(TOKEN_KEY, token),
  });
  const token = window.QUADFUSE_TOKEN || window.sessionStorage.getItem(TOKEN_KEY) || null;
  render(root, ctl);
  void ctl.start(token);
}

main();
