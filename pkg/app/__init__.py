# Multilingual alignment lab package
