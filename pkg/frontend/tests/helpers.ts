import { ApiClient } from "../src/api";
import { Controller, type ControllerOptions, type TaskView } from "../src/controller";
import type { FakeAnnosvc } from "./fake_service";

export function makeController(svc: FakeAnnosvc, opts: ControllerOptions = {}): Controller {
  return new Controller((token) => new ApiClient("", token, svc.fetch), opts);
}

export async function startOnTask(svc: FakeAnnosvc, token = "tok-good"): Promise<Controller> {
  const ctl = makeController(svc);
  await ctl.start(token);
  if (ctl.state.kind !== "task") {
    throw new Error(`expected task screen, got ${ctl.state.kind}`);
  }
  return ctl;
}

export function viewOf(ctl: Controller): TaskView {
  if (ctl.state.kind !== "task") {
    throw new Error(`expected task screen, got ${ctl.state.kind}`);
  }
  return ctl.state.view;
}

/** Complete the whole form through the schema-checked setters. */
export function fillValid(ctl: Controller, dealerIds: string[] = []): void {
  const view = viewOf(ctl);
  ctl.setDrugForm("pills");
  ctl.setContactApp("snapchat");
  for (const comment of view.task.post.comments) {
    const isDealer = dealerIds.includes(comment.author_id);
    ctl.setCommentRole(comment.comment_id, isDealer ? "dealer" : "neither");
  }
  ctl.setContainsDealer(dealerIds.length > 0);
  for (const uid of dealerIds) ctl.toggleDealer(uid);
}

export function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
