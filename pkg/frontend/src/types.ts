/** Wire types for the annotation service API and the local draft model. */

export interface SchemaDoc {
  version: number;
  enums: {
    drug_form: string[];
    contact_app: string[];
    comment_role: string[];
    task_status: string[];
  };
}

export interface CommentDoc {
  comment_id: string;
  author_id: string;
  text: string;
}

export interface PostDoc {
  post_id: string;
  author_id: string;
  caption: string;
  image_ref: string;
  hashtags: string[];
  comments: CommentDoc[];
}

export interface TaskDoc {
  task_id: string;
  status: string;
  assigned_to: string | null;
  n_revisions: number;
  post: PostDoc;
}

export interface HomepageDoc {
  user_id: string;
  bio: string;
  image_refs: string[];
}

export interface StatsDoc {
  users: number;
  posts: number;
  tasks: number;
  unlabeled: number;
  in_progress: number;
  done: number;
  revisions: number;
}

export interface ErrorDoc {
  code: string;
  message: string;
  field?: string;
}

// -- local draft state ------------------------------------------------------
// null means "not chosen yet"; the submit payload only ever carries values
// drawn from the service schema.

export interface ImageDraft {
  drug_form: string | null;
  contact_app: string | null;
}

export interface CommentDraft {
  comment_id: string;
  role: string | null;
  has_contact_info: boolean;
}

export interface VerdictDraft {
  contains_dealer: boolean | null;
  dealer_user_ids: string[];
}

export interface Draft {
  image: ImageDraft;
  comments: CommentDraft[];
  verdict: VerdictDraft;
}

export interface SubmitPayload {
  image: { drug_form: string; contact_app: string };
  comments: { comment_id: string; role: string; has_contact_info: boolean }[];
  verdict: { contains_dealer: boolean; dealer_user_ids: string[] };
}
