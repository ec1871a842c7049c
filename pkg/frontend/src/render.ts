/** State-driven DOM: every change rebuilds the screen from controller state,
 * so the form always mirrors the draft exactly. Picker options come from the
 * service schema and nowhere else.
 */

import type { Controller, HomepageState, TaskView, UiState } from "./controller";
import { eligibleDealers, pickerOptions } from "./draft";
import type { CommentDoc } from "./types";

type Child = Node | string | null;

function h(tag: string, props: Record<string, unknown> = {}, ...children: Child[]): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(props)) {
    if (value === null || value === undefined || value === false) continue;
    if (key === "class") {
      node.className = String(value);
    } else if (key === "text") {
      node.textContent = String(value);
    } else if (key.startsWith("on") && typeof value === "function") {
      (node as unknown as Record<string, unknown>)[key] = value;
    } else if (value === true) {
      (node as unknown as Record<string, unknown>)[key] = true;
    } else {
      node.setAttribute(key, String(value));
    }
  }
  for (const child of children) {
    if (child === null) continue;
    node.appendChild(typeof child === "string" ? document.createTextNode(child) : child);
  }
  return node;
}

function imageFrame(ref: string): HTMLElement {
  return h(
    "figure",
    { class: "image-frame" },
    h("img", { src: ref, alt: ref }),
    h("figcaption", { text: ref }),
  );
}

/** Fieldset wrapper carrying the service-style field path for highlighting. */
function field(
  view: TaskView,
  path: string,
  legend: string,
  ...children: Child[]
): HTMLElement {
  const marked = view.highlight === path ? " field-error" : "";
  return h(
    "fieldset",
    { class: `field${marked}`, "data-field": path },
    h("legend", { text: legend }),
    ...children,
  );
}

function radioGroup(
  name: string,
  options: string[],
  current: string | null,
  onPick: (value: string) => void,
): HTMLElement {
  return h(
    "div",
    { class: "radio-group" },
    ...options.map((opt) =>
      h(
        "label",
        { class: "radio-option" },
        h("input", {
          type: "radio",
          name,
          value: opt,
          checked: current === opt,
          onchange: () => onPick(opt),
        }),
        opt,
      ),
    ),
  );
}

function commentRow(
  ctl: Controller,
  view: TaskView,
  comment: CommentDoc,
  index: number,
): HTMLElement {
  const roles = pickerOptions(ctl.schema!).commentRoles;
  const row = view.draft.comments[index];
  return h(
    "article",
    { class: "comment-row", "data-comment": comment.comment_id },
    h(
      "header",
      { class: "comment-head" },
      h("span", { class: "comment-author", text: comment.author_id }),
      h("button", {
        type: "button",
        class: "homepage-btn",
        "data-user": comment.author_id,
        text: "view homepage",
        onclick: () => void ctl.openHomepage(comment.author_id),
      }),
    ),
    h("p", { class: "comment-text", text: comment.text }),
    field(
      view,
      `comments[${index}].role`,
      "role",
      radioGroup(`role-${comment.comment_id}`, roles, row?.role ?? null, (value) =>
        ctl.setCommentRole(comment.comment_id, value),
      ),
    ),
    h(
      "label",
      { class: "contact-flag" },
      h("input", {
        type: "checkbox",
        checked: row?.has_contact_info ?? false,
        onchange: (ev: Event) =>
          ctl.setCommentContact(comment.comment_id, (ev.target as HTMLInputElement).checked),
      }),
      "mentions contact info",
    ),
  );
}

function drawer(ctl: Controller, hp: HomepageState): HTMLElement {
  let body: HTMLElement;
  if (hp.status === "loading") {
    body = h("p", { class: "drawer-loading", text: "loading homepage…" });
  } else if (hp.status === "not_found") {
    body = h("p", { class: "drawer-not-found", text: hp.message });
  } else if (hp.status === "error") {
    body = h("p", { class: "drawer-error", text: hp.message });
  } else {
    const doc = hp.doc!;
    body = h(
      "div",
      { class: "drawer-body" },
      h("p", { class: "homepage-bio", text: doc.bio || "(no bio)" }),
      h(
        "ul",
        { class: "homepage-images" },
        ...doc.image_refs.map((ref) => h("li", {}, imageFrame(ref))),
      ),
    );
  }
  return h(
    "aside",
    { class: "drawer" },
    h(
      "header",
      { class: "drawer-head" },
      h("h2", { text: `homepage: ${hp.userId}` }),
      h("button", {
        type: "button",
        class: "drawer-close",
        text: "close",
        onclick: () => ctl.closeHomepage(),
      }),
    ),
    body,
  );
}

function verdictBar(ctl: Controller, view: TaskView): HTMLElement {
  const verdict = view.draft.verdict;
  const dealers = eligibleDealers(view.task);
  const dealersOn = verdict.contains_dealer === true;
  return h(
    "footer",
    { class: "verdict-bar" },
    field(
      view,
      "verdict.contains_dealer",
      "does this post involve a dealer?",
      h(
        "div",
        { class: "radio-group" },
        h(
          "label",
          { class: "radio-option" },
          h("input", {
            type: "radio",
            name: "contains_dealer",
            value: "yes",
            checked: verdict.contains_dealer === true,
            onchange: () => ctl.setContainsDealer(true),
          }),
          "yes",
        ),
        h(
          "label",
          { class: "radio-option" },
          h("input", {
            type: "radio",
            name: "contains_dealer",
            value: "no",
            checked: verdict.contains_dealer === false,
            onchange: () => ctl.setContainsDealer(false),
          }),
          "no",
        ),
      ),
    ),
    field(
      view,
      "verdict.dealer_user_ids",
      "dealer accounts",
      h(
        "div",
        { class: "dealer-list" },
        ...dealers.map((uid) =>
          h(
            "label",
            { class: "dealer-option" },
            h("input", {
              type: "checkbox",
              value: uid,
              checked: verdict.dealer_user_ids.includes(uid),
              disabled: !dealersOn,
              onchange: () => ctl.toggleDealer(uid),
            }),
            uid,
          ),
        ),
      ),
    ),
    view.issues.length > 0
      ? h(
          "ul",
          { class: "issues" },
          ...view.issues.map((issue) => h("li", { "data-field": issue.field, text: issue.message })),
        )
      : null,
    h("button", {
      type: "button",
      class: "submit-btn",
      text: view.submitting ? "submitting…" : "submit & next",
      disabled: !ctl.canSubmit(),
      onclick: () => void ctl.submit(),
    }),
  );
}

function taskScreen(ctl: Controller, view: TaskView): HTMLElement {
  const schema = ctl.schema!;
  const options = pickerOptions(schema);
  const post = view.task.post;
  return h(
    "div",
    { class: "screen screen-task" },
    h(
      "header",
      { class: "task-head" },
      h("h1", { text: "annotation workbench" }),
      h("span", {
        class: "task-meta",
        text: `${view.task.task_id} · post ${post.post_id} by ${post.author_id}`,
      }),
      h("button", {
        type: "button",
        class: "homepage-btn author-homepage",
        "data-user": post.author_id,
        text: "author homepage",
        onclick: () => void ctl.openHomepage(post.author_id),
      }),
    ),
    view.toast ? h("div", { class: "toast", text: view.toast }) : null,
    view.banner ? h("div", { class: "banner", text: view.banner }) : null,
    h(
      "main",
      { class: "panes" },
      h(
        "section",
        { class: "pane pane-image" },
        imageFrame(post.image_ref),
        field(
          view,
          "image.drug_form",
          "drug form in the image",
          radioGroup("drug_form", options.drugForms, view.draft.image.drug_form, (v) =>
            ctl.setDrugForm(v),
          ),
        ),
        field(
          view,
          "image.contact_app",
          "contact app in the image",
          radioGroup("contact_app", options.contactApps, view.draft.image.contact_app, (v) =>
            ctl.setContactApp(v),
          ),
        ),
      ),
      h(
        "section",
        { class: "pane pane-post" },
        h("p", { class: "caption", text: post.caption }),
        h("p", {
          class: "hashtags",
          text: post.hashtags.map((t) => `#${t}`).join(" "),
        }),
        h(
          "div",
          { class: "comments" },
          ...post.comments.map((c, i) => commentRow(ctl, view, c, i)),
        ),
      ),
    ),
    verdictBar(ctl, view),
    view.homepage ? drawer(ctl, view.homepage) : null,
  );
}

function screen(ctl: Controller, state: UiState): HTMLElement {
  switch (state.kind) {
    case "booting":
    case "loading":
      return h("div", { class: "screen screen-loading", text: "loading…" });
    case "auth_required": {
      const input = h("input", {
        type: "password",
        class: "token-input",
        placeholder: "access token",
      }) as HTMLInputElement;
      return h(
        "div",
        { class: "screen screen-auth" },
        h("h1", { text: "annotation workbench" }),
        h("p", { class: "auth-message", text: state.message }),
        h(
          "form",
          {
            class: "auth-form",
            onsubmit: (ev: Event) => {
              ev.preventDefault();
              void ctl.setToken(input.value);
            },
          },
          input,
          h("button", { type: "submit", text: "start" }),
        ),
      );
    }
    case "idle":
      return h(
        "div",
        { class: "screen screen-idle" },
        h("h1", { text: "all caught up" }),
        h("p", { class: "idle-message", text: state.message }),
        h("button", {
          type: "button",
          class: "refresh-btn",
          text: "check again",
          onclick: () => void ctl.loadNext(null),
        }),
      );
    case "error":
      return h(
        "div",
        { class: "screen screen-error" },
        h("h1", { text: "service unavailable" }),
        h("p", { class: "error-message", text: state.message }),
        h("button", {
          type: "button",
          class: "retry-btn",
          text: "retry",
          onclick: () => void ctl.retry(),
        }),
      );
    case "task":
      return taskScreen(ctl, state.view);
  }
}

export function render(root: HTMLElement, ctl: Controller): void {
  root.textContent = "";
  root.appendChild(screen(ctl, ctl.state));
}
