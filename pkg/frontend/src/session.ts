// Session strip: every completed submit is kept so the user can compare
// iterations of their drawing against earlier results.

export interface SessionEntry {
  sketchPng: string; // base64, what was submitted
  refinedPng?: string;
  photoPng: string;
  submittedAt: number; // monotonically increasing sequence number
}

export class Session {
  private entries: SessionEntry[] = [];
  private counter = 0;

  add(sketchPng: string, photoPng: string, refinedPng?: string): SessionEntry {
    const entry: SessionEntry = {
      sketchPng,
      photoPng,
      refinedPng,
      submittedAt: this.counter++,
    };
    this.entries.push(entry);
    return entry;
  }

  all(): readonly SessionEntry[] {
    return this.entries;
  }

  get length(): number {
    return this.entries.length;
  }

  latest(): SessionEntry | undefined {
    return this.entries[this.entries.length - 1];
  }
}
