// One in-flight query per panel. Every run gets a sequence number; a
// response only lands if no newer run started while it was in flight, so a
// slow stale answer can never overwrite a fresh one.

export class PanelQuery<T> {
  private seq = 0;

  async run(
    fetcher: () => Promise<T>,
    apply: (result: T) => void,
    onError?: (error: unknown) => void,
  ): Promise<boolean> {
    const mine = ++this.seq;
    try {
      const result = await fetcher();
      if (mine !== this.seq) return false; // superseded: discard
      apply(result);
      return true;
    } catch (error) {
      if (mine === this.seq && onError) onError(error);
      return false;
    }
  }
}
