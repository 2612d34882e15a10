/**
 * Word counting for the explanation box.
 *
 * Must agree with the server's definition (whitespace-run splitting with
 * leading/trailing whitespace ignored); the shared 50-string corpus in
 * ../tests/fixtures/wordcount_corpus.json pins both sides.
 */
export function wordCount(text: string): number {
  const trimmed = text.trim();
  if (!trimmed) return 0;
  return trimmed.split(/\s+/).length;
}
