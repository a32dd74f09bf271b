// @xenova/transformers is an optional dependency loaded dynamically; when it
// is absent the import fails at runtime and the CLI exits with code 2.
declare module "@xenova/transformers" {
  export const pipeline: (
    task: string,
    model?: string,
  ) => Promise<
    (text: string, opts?: { pooling?: string; normalize?: boolean }) =>
      Promise<{ data: Float32Array }>
  >;
}
