import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    // every test shells out to the reconstruction CLI; give slow machines room
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
