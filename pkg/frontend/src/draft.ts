/** Draft model: per-task working state, validated against the service schema.
 *
 * Field paths in issues use the same dotted/indexed form as the service's
 * validation errors ("image.drug_form", "comments[1].role", ...), so local
 * and server-reported problems highlight the same way.
 */

import type {
  CommentDraft,
  Draft,
  SchemaDoc,
  SubmitPayload,
  TaskDoc,
} from "./types";

export interface DraftIssue {
  field: string;
  message: string;
}

export function newDraft(task: TaskDoc): Draft {
  return {
    image: { drug_form: null, contact_app: null },
    comments: task.post.comments.map((c) => ({
      comment_id: c.comment_id,
      role: null,
      has_contact_info: false,
    })),
    verdict: { contains_dealer: null, dealer_user_ids: [] },
  };
}

/** Users a verdict may name as dealers: the post author, then commenters. */
export function eligibleDealers(task: TaskDoc): string[] {
  const seen = new Set<string>();
  const out: string[] = [];
  for (const uid of [task.post.author_id, ...task.post.comments.map((c) => c.author_id)]) {
    if (!seen.has(uid)) {
      seen.add(uid);
      out.push(uid);
    }
  }
  return out;
}

/** Picker option lists, taken verbatim from the service schema. */
export function pickerOptions(schema: SchemaDoc): {
  drugForms: string[];
  contactApps: string[];
  commentRoles: string[];
} {
  return {
    drugForms: [...schema.enums.drug_form],
    contactApps: [...schema.enums.contact_app],
    commentRoles: [...schema.enums.comment_role],
  };
}

function enumIssue(
  value: string | null,
  allowed: string[],
  field: string,
  label: string,
): DraftIssue | null {
  if (value === null) return { field, message: `choose a ${label}` };
  if (!allowed.includes(value)) {
    return { field, message: `${label} ${JSON.stringify(value)} is not in the schema` };
  }
  return null;
}

/** Everything that would make the service reject this draft, in render order. */
export function draftIssues(schema: SchemaDoc, task: TaskDoc, draft: Draft): DraftIssue[] {
  const issues: DraftIssue[] = [];
  const push = (issue: DraftIssue | null) => {
    if (issue !== null) issues.push(issue);
  };

  push(enumIssue(draft.image.drug_form, schema.enums.drug_form, "image.drug_form", "drug form"));
  push(
    enumIssue(draft.image.contact_app, schema.enums.contact_app, "image.contact_app", "contact app"),
  );

  const known = new Set(task.post.comments.map((c) => c.comment_id));
  const seen = new Set<string>();
  draft.comments.forEach((row, i) => {
    if (!known.has(row.comment_id) || seen.has(row.comment_id)) {
      push({
        field: `comments[${i}].comment_id`,
        message: `comment ${JSON.stringify(row.comment_id)} does not match the post`,
      });
    }
    seen.add(row.comment_id);
    push(enumIssue(row.role, schema.enums.comment_role, `comments[${i}].role`, "comment role"));
  });
  if (seen.size !== known.size || draft.comments.length !== task.post.comments.length) {
    push({ field: "comments", message: "every comment on the post needs a role" });
  }

  const verdict = draft.verdict;
  if (verdict.contains_dealer === null) {
    push({ field: "verdict.contains_dealer", message: "decide whether the post involves a dealer" });
  } else if (verdict.contains_dealer && verdict.dealer_user_ids.length === 0) {
    push({ field: "verdict.dealer_user_ids", message: "tick at least one dealer account" });
  } else if (!verdict.contains_dealer && verdict.dealer_user_ids.length > 0) {
    push({ field: "verdict.dealer_user_ids", message: "clear the dealer list or flip the verdict" });
  }
  if (new Set(verdict.dealer_user_ids).size !== verdict.dealer_user_ids.length) {
    push({ field: "verdict.dealer_user_ids", message: "dealer list has duplicates" });
  }
  const eligible = new Set(eligibleDealers(task));
  for (const uid of verdict.dealer_user_ids) {
    if (!eligible.has(uid)) {
      push({
        field: "verdict.dealer_user_ids",
        message: `${uid} neither commented on nor authored the post`,
      });
    }
  }
  return issues;
}

export function isDirty(draft: Draft): boolean {
  return (
    draft.image.drug_form !== null ||
    draft.image.contact_app !== null ||
    draft.comments.some((c: CommentDraft) => c.role !== null || c.has_contact_info) ||
    draft.verdict.contains_dealer !== null ||
    draft.verdict.dealer_user_ids.length > 0
  );
}

/** Wire payload for a draft with no outstanding issues. */
export function toPayload(draft: Draft): SubmitPayload {
  if (draft.image.drug_form === null || draft.image.contact_app === null) {
    throw new Error("draft is incomplete: image labels missing");
  }
  if (draft.verdict.contains_dealer === null) {
    throw new Error("draft is incomplete: verdict missing");
  }
  return {
    image: {
      drug_form: draft.image.drug_form,
      contact_app: draft.image.contact_app,
    },
    comments: draft.comments.map((c) => {
      if (c.role === null) throw new Error(`draft is incomplete: role for ${c.comment_id}`);
      return {
        comment_id: c.comment_id,
        role: c.role,
        has_contact_info: c.has_contact_info,
      };
    }),
    verdict: {
      contains_dealer: draft.verdict.contains_dealer,
      dealer_user_ids: [...draft.verdict.dealer_user_ids],
    },
  };
}
